#include "ipose/cli.hpp"

int main(int argc, char** argv) { return ipose::cli::run(argc, argv); }
