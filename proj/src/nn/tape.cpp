#include "ipose/nn/tape.hpp"

namespace ipose::nn {

void affine(Tape& t, const std::vector<Var>& x, const std::vector<Var>& w,
            const std::vector<Var>& b, int n_out, std::vector<Var>& out) {
    const int n_in = static_cast<int>(x.size());
    if (static_cast<int>(w.size()) != n_out * n_in || static_cast<int>(b.size()) != n_out)
        throw ContractError("affine: weight/bias shape mismatch");
    out.clear();
    out.reserve(n_out);
    for (int i = 0; i < n_out; ++i) {
        double acc = b[i].value();
        const Var* wrow = w.data() + static_cast<std::size_t>(i) * n_in;
        for (int j = 0; j < n_in; ++j) acc += wrow[j].value() * x[j].value();
        t.begin(acc);
        for (int j = 0; j < n_in; ++j) {
            t.edge(x[j].id, wrow[j].value());
            t.edge(wrow[j].id, x[j].value());
        }
        t.edge(b[i].id, 1.0);
        out.push_back(Var(&t, t.end()));
    }
}

}  // namespace ipose::nn
