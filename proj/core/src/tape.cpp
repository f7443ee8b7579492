#include "horai/tape.hpp"

#include <algorithm>
#include <cmath>

#include "horai/fft.hpp"

namespace horai {

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluB = 0.044715f;
}  // namespace

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

Parameter& ParamStore::create(std::string name, Shape shape, float init_std, Rng& rng) {
    Tensor t(shape);
    if (init_std > 0.0f)
        for (float& x : t.data) x = rng.normal(0.0f, init_std);
    return create_with(std::move(name), std::move(t));
}

Parameter& ParamStore::create_with(std::string name, Tensor value) {
    if (index_.count(name)) throw InternalError("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named " + name);
    return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named " + name);
    return *params_[it->second];
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParamStore::total_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& p : params_)
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& p : params_)
        if (p->name.rfind(prefix, 0) == 0) p->trainable = trainable;
}

// ---------------------------------------------------------------------------
// Raw matmul kernel
// ---------------------------------------------------------------------------

void matmul_raw(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b,
                Tensor& out, bool accumulate) {
    const int m = trans_a ? a.cols() : a.rows();
    const int k = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (k != kb)
        throw ShapeError("matmul inner dims " + std::to_string(k) + " vs " + std::to_string(kb));
    if (out.rows() != m || out.cols() != n)
        throw ShapeError("matmul output shape " + shape_str(out.shape));
    if (!accumulate) std::fill(out.data.begin(), out.data.end(), 0.0f);

    const float* A = a.data.data();
    const float* B = b.data.data();
    float* C = out.data.data();
    const int lda = a.cols(), ldb = b.cols(), ldc = n;

    if (!trans_a && !trans_b) {
        for (int i = 0; i < m; ++i) {
            float* c = C + static_cast<std::size_t>(i) * ldc;
            const float* ar = A + static_cast<std::size_t>(i) * lda;
            for (int p = 0; p < k; ++p) {
                const float av = ar[p];
                const float* br = B + static_cast<std::size_t>(p) * ldb;
                for (int j = 0; j < n; ++j) c[j] += av * br[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (int i = 0; i < m; ++i) {
            const float* ar = A + static_cast<std::size_t>(i) * lda;
            float* c = C + static_cast<std::size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) {
                const float* br = B + static_cast<std::size_t>(j) * ldb;
                float acc = 0.0f;
                for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
                c[j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        for (int p = 0; p < k; ++p) {
            const float* ar = A + static_cast<std::size_t>(p) * lda;  // row p of a: entries (p, i)
            const float* br = B + static_cast<std::size_t>(p) * ldb;
            for (int i = 0; i < m; ++i) {
                const float av = ar[i];
                float* c = C + static_cast<std::size_t>(i) * ldc;
                for (int j = 0; j < n; ++j) c[j] += av * br[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            float* c = C + static_cast<std::size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) {
                const float* br = B + static_cast<std::size_t>(j) * ldb;
                float acc = 0.0f;
                for (int p = 0; p < k; ++p) acc += A[static_cast<std::size_t>(p) * lda + i] * br[p];
                c[j] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Tape plumbing
// ---------------------------------------------------------------------------

void Tape::check(ValueId id) const {
    if (!id.valid() || id.idx >= static_cast<int>(nodes_.size()))
        throw InternalError("tape value id out of range");
}

int Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> bw,
               const char* op_name) {
    if (check_finite_ && !value.all_finite())
        throw ValueError(std::string(op_name) + " produced a non-finite value");
    allocated_ += value.numel();
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

ValueId Tape::constant(Tensor t) { return {push(std::move(t), false, nullptr, "constant")}; }

ValueId Tape::input(Tensor t) {
    const bool rg = t.requires_grad;
    return {push(std::move(t), rg, nullptr, "input")};
}

ValueId Tape::param(Parameter& p) {
    int idx = push(p.value, true, nullptr, "param");
    nodes_[static_cast<std::size_t>(idx)].param = &p;
    param_nodes_.push_back(idx);
    return {idx};
}

const Tensor& Tape::value(ValueId id) const {
    check(id);
    return nodes_[static_cast<std::size_t>(id.idx)].value;
}

const Tensor& Tape::grad(ValueId id) const {
    check(id);
    if (!backward_done_) throw InternalError("grad() before backward()");
    return nodes_[static_cast<std::size_t>(id.idx)].grad;
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

ValueId Tape::matmul(ValueId a, ValueId b, bool trans_a, bool trans_b) {
    check(a);
    check(b);
    const Tensor& A = v(a.idx);
    const Tensor& B = v(b.idx);
    const int m = trans_a ? A.cols() : A.rows();
    const int n = trans_b ? B.rows() : B.cols();
    Tensor out({m, n});
    matmul_raw(A, B, trans_a, trans_b, out, false);
    const bool ng = wants(a.idx) || wants(b.idx);
    int ai = a.idx, bi = b.idx;
    int idx = push(std::move(out), ng, nullptr, "matmul");
    if (ng) {
        node(idx).backward = [ai, bi, idx, trans_a, trans_b](Tape& t) {
            const Tensor& G = t.g(idx);
            if (t.wants(ai)) {
                if (!trans_a && !trans_b) matmul_raw(G, t.v(bi), false, true, t.g(ai), true);
                else if (!trans_a && trans_b) matmul_raw(G, t.v(bi), false, false, t.g(ai), true);
                else if (trans_a && !trans_b) matmul_raw(t.v(bi), G, false, true, t.g(ai), true);
                else matmul_raw(t.v(bi), G, true, true, t.g(ai), true);
            }
            if (t.wants(bi)) {
                if (!trans_a && !trans_b) matmul_raw(t.v(ai), G, true, false, t.g(bi), true);
                else if (!trans_a && trans_b) matmul_raw(G, t.v(ai), true, false, t.g(bi), true);
                else if (trans_a && !trans_b) matmul_raw(t.v(ai), G, false, false, t.g(bi), true);
                else matmul_raw(G, t.v(ai), true, true, t.g(bi), true);
            }
        };
    }
    return {idx};
}

ValueId Tape::add(ValueId a, ValueId b) {
    check(a);
    check(b);
    const Tensor& A = v(a.idx);
    const Tensor& B = v(b.idx);
    if (!A.same_shape(B))
        throw ShapeError("add: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] + B.data[i];
    const bool ng = wants(a.idx) || wants(b.idx);
    int ai = a.idx, bi = b.idx;
    int idx = push(std::move(out), ng, nullptr, "add");
    if (ng)
        node(idx).backward = [ai, bi, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            if (t.wants(ai))
                for (std::size_t i = 0; i < G.data.size(); ++i) t.g(ai).data[i] += G.data[i];
            if (t.wants(bi))
                for (std::size_t i = 0; i < G.data.size(); ++i) t.g(bi).data[i] += G.data[i];
        };
    return {idx};
}

ValueId Tape::sub(ValueId a, ValueId b) {
    check(a);
    check(b);
    const Tensor& A = v(a.idx);
    const Tensor& B = v(b.idx);
    if (!A.same_shape(B))
        throw ShapeError("sub: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] - B.data[i];
    const bool ng = wants(a.idx) || wants(b.idx);
    int ai = a.idx, bi = b.idx;
    int idx = push(std::move(out), ng, nullptr, "sub");
    if (ng)
        node(idx).backward = [ai, bi, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            if (t.wants(ai))
                for (std::size_t i = 0; i < G.data.size(); ++i) t.g(ai).data[i] += G.data[i];
            if (t.wants(bi))
                for (std::size_t i = 0; i < G.data.size(); ++i) t.g(bi).data[i] -= G.data[i];
        };
    return {idx};
}

ValueId Tape::mul(ValueId a, ValueId b) {
    check(a);
    check(b);
    const Tensor& A = v(a.idx);
    const Tensor& B = v(b.idx);
    if (!A.same_shape(B))
        throw ShapeError("mul: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * B.data[i];
    const bool ng = wants(a.idx) || wants(b.idx);
    int ai = a.idx, bi = b.idx;
    int idx = push(std::move(out), ng, nullptr, "mul");
    if (ng)
        node(idx).backward = [ai, bi, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            if (t.wants(ai)) {
                const Tensor& B2 = t.v(bi);
                for (std::size_t i = 0; i < G.data.size(); ++i)
                    t.g(ai).data[i] += G.data[i] * B2.data[i];
            }
            if (t.wants(bi)) {
                const Tensor& A2 = t.v(ai);
                for (std::size_t i = 0; i < G.data.size(); ++i)
                    t.g(bi).data[i] += G.data[i] * A2.data[i];
            }
        };
    return {idx};
}

ValueId Tape::add_rowvec(ValueId a, ValueId row) {
    check(a);
    check(row);
    const Tensor& A = v(a.idx);
    const Tensor& R = v(row.idx);
    if (R.rows() != 1 || R.cols() != A.cols())
        throw ShapeError("add_rowvec: " + shape_str(A.shape) + " vs " + shape_str(R.shape));
    Tensor out(A.shape);
    const int n = A.cols();
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) + R.data[static_cast<std::size_t>(j)];
    const bool ng = wants(a.idx) || wants(row.idx);
    int ai = a.idx, ri = row.idx;
    int idx = push(std::move(out), ng, nullptr, "add_rowvec");
    if (ng)
        node(idx).backward = [ai, ri, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            if (t.wants(ai))
                for (std::size_t i = 0; i < G.data.size(); ++i) t.g(ai).data[i] += G.data[i];
            if (t.wants(ri)) {
                Tensor& gr = t.g(ri);
                const int n = G.cols();
                for (int i = 0; i < G.rows(); ++i)
                    for (int j = 0; j < n; ++j) gr.data[static_cast<std::size_t>(j)] += G.at(i, j);
            }
        };
    return {idx};
}

ValueId Tape::mul_rowwise(ValueId a, ValueId col) {
    check(a);
    check(col);
    const Tensor& A = v(a.idx);
    const Tensor& C = v(col.idx);
    if (C.cols() != 1 || C.rows() != A.rows())
        throw ShapeError("mul_rowwise: " + shape_str(A.shape) + " vs " + shape_str(C.shape));
    Tensor out(A.shape);
    for (int i = 0; i < A.rows(); ++i) {
        const float c = C.data[static_cast<std::size_t>(i)];
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j) * c;
    }
    const bool ng = wants(a.idx) || wants(col.idx);
    int ai = a.idx, ci = col.idx;
    int idx = push(std::move(out), ng, nullptr, "mul_rowwise");
    if (ng)
        node(idx).backward = [ai, ci, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& A2 = t.v(ai);
            const Tensor& C2 = t.v(ci);
            if (t.wants(ai)) {
                Tensor& ga = t.g(ai);
                for (int i = 0; i < G.rows(); ++i) {
                    const float c = C2.data[static_cast<std::size_t>(i)];
                    for (int j = 0; j < G.cols(); ++j) ga.at(i, j) += G.at(i, j) * c;
                }
            }
            if (t.wants(ci)) {
                Tensor& gc = t.g(ci);
                for (int i = 0; i < G.rows(); ++i) {
                    float acc = 0.0f;
                    for (int j = 0; j < G.cols(); ++j) acc += G.at(i, j) * A2.at(i, j);
                    gc.data[static_cast<std::size_t>(i)] += acc;
                }
            }
        };
    return {idx};
}

ValueId Tape::div_rowwise(ValueId a, ValueId col) {
    check(a);
    check(col);
    const Tensor& A = v(a.idx);
    const Tensor& C = v(col.idx);
    if (C.cols() != 1 || C.rows() != A.rows())
        throw ShapeError("div_rowwise: " + shape_str(A.shape) + " vs " + shape_str(C.shape));
    Tensor out(A.shape);
    for (int i = 0; i < A.rows(); ++i) {
        const float c = C.data[static_cast<std::size_t>(i)];
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j) / c;
    }
    const bool ng = wants(a.idx) || wants(col.idx);
    int ai = a.idx, ci = col.idx;
    int idx = push(std::move(out), ng, nullptr, "div_rowwise");
    if (ng)
        node(idx).backward = [ai, ci, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& A2 = t.v(ai);
            const Tensor& C2 = t.v(ci);
            if (t.wants(ai)) {
                Tensor& ga = t.g(ai);
                for (int i = 0; i < G.rows(); ++i) {
                    const float inv = 1.0f / C2.data[static_cast<std::size_t>(i)];
                    for (int j = 0; j < G.cols(); ++j) ga.at(i, j) += G.at(i, j) * inv;
                }
            }
            if (t.wants(ci)) {
                Tensor& gc = t.g(ci);
                for (int i = 0; i < G.rows(); ++i) {
                    const float c = C2.data[static_cast<std::size_t>(i)];
                    float acc = 0.0f;
                    for (int j = 0; j < G.cols(); ++j) acc += G.at(i, j) * A2.at(i, j);
                    gc.data[static_cast<std::size_t>(i)] -= acc / (c * c);
                }
            }
        };
    return {idx};
}

ValueId Tape::scale(ValueId a, float c) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * c;
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "scale");
    if (ng)
        node(idx).backward = [ai, idx, c](Tape& t) {
            const Tensor& G = t.g(idx);
            for (std::size_t i = 0; i < G.data.size(); ++i) t.g(ai).data[i] += G.data[i] * c;
        };
    return {idx};
}

ValueId Tape::sigmoid(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = 1.0f / (1.0f + std::exp(-A.data[i]));
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "sigmoid");
    if (ng)
        node(idx).backward = [ai, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& Y = t.v(idx);
            for (std::size_t i = 0; i < G.data.size(); ++i) {
                const float y = Y.data[i];
                t.g(ai).data[i] += G.data[i] * y * (1.0f - y);
            }
        };
    return {idx};
}

ValueId Tape::gelu(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const float x = A.data[i];
        const float u = kGeluC * (x + kGeluB * x * x * x);
        out.data[i] = 0.5f * x * (1.0f + std::tanh(u));
    }
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "gelu");
    if (ng)
        node(idx).backward = [ai, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& X = t.v(ai);
            for (std::size_t i = 0; i < G.data.size(); ++i) {
                const float x = X.data[i];
                const float u = kGeluC * (x + kGeluB * x * x * x);
                const float th = std::tanh(u);
                const float du = kGeluC * (1.0f + 3.0f * kGeluB * x * x);
                const float dy = 0.5f * (1.0f + th) + 0.5f * x * (1.0f - th * th) * du;
                t.g(ai).data[i] += G.data[i] * dy;
            }
        };
    return {idx};
}

ValueId Tape::softmax_rows(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out(A.shape);
    for (int i = 0; i < A.rows(); ++i) {
        float mx = A.at(i, 0);
        for (int j = 1; j < A.cols(); ++j) mx = std::max(mx, A.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < A.cols(); ++j) {
            const float e = std::exp(A.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) *= inv;
    }
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "softmax_rows");
    if (ng)
        node(idx).backward = [ai, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& Y = t.v(idx);
            Tensor& ga = t.g(ai);
            for (int i = 0; i < G.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < G.cols(); ++j) dot += static_cast<double>(G.at(i, j)) * Y.at(i, j);
                const float d = static_cast<float>(dot);
                for (int j = 0; j < G.cols(); ++j)
                    ga.at(i, j) += Y.at(i, j) * (G.at(i, j) - d);
            }
        };
    return {idx};
}

ValueId Tape::masked_softmax_rows(ValueId a, const std::vector<std::uint8_t>& mask) {
    check(a);
    const Tensor& A = v(a.idx);
    if (mask.size() != A.numel())
        throw ShapeError("masked_softmax_rows: mask size " + std::to_string(mask.size()) +
                         " vs tensor " + shape_str(A.shape));
    Tensor out(A.shape);
    const int n = A.cols();
    for (int i = 0; i < A.rows(); ++i) {
        const std::uint8_t* mrow = mask.data() + static_cast<std::size_t>(i) * n;
        float mx = 0.0f;
        bool any = false;
        for (int j = 0; j < n; ++j)
            if (mrow[j]) {
                mx = any ? std::max(mx, A.at(i, j)) : A.at(i, j);
                any = true;
            }
        if (!any) continue;  // whole row excluded -> zeros
        double sum = 0.0;
        for (int j = 0; j < n; ++j)
            if (mrow[j]) {
                const float e = std::exp(A.at(i, j) - mx);
                out.at(i, j) = e;
                sum += e;
            }
        const float inv = static_cast<float>(1.0 / sum);
        for (int j = 0; j < n; ++j)
            if (mrow[j]) out.at(i, j) *= inv;
    }
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "masked_softmax_rows");
    if (ng)
        node(idx).backward = [ai, idx, mask](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& Y = t.v(idx);
            Tensor& ga = t.g(ai);
            const int n = G.cols();
            for (int i = 0; i < G.rows(); ++i) {
                const std::uint8_t* mrow = mask.data() + static_cast<std::size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j)
                    if (mrow[j]) dot += static_cast<double>(G.at(i, j)) * Y.at(i, j);
                const float d = static_cast<float>(dot);
                for (int j = 0; j < n; ++j)
                    if (mrow[j]) ga.at(i, j) += Y.at(i, j) * (G.at(i, j) - d);
            }
        };
    return {idx};
}

ValueId Tape::layer_norm(ValueId x, ValueId gain, ValueId bias, float eps) {
    check(x);
    check(gain);
    check(bias);
    const Tensor& X = v(x.idx);
    const Tensor& Gn = v(gain.idx);
    const Tensor& B = v(bias.idx);
    const int n = X.cols();
    if (Gn.rows() != 1 || Gn.cols() != n || B.rows() != 1 || B.cols() != n)
        throw ShapeError("layer_norm: gain/bias must be [1," + std::to_string(n) + "]");

    Tensor out(X.shape);
    Tensor xhat(X.shape);
    std::vector<float> inv_std(static_cast<std::size_t>(X.rows()));
    for (int i = 0; i < X.rows(); ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += X.at(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = X.at(i, j) - mu;
            var += d * d;
        }
        var /= n;
        const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < n; ++j) {
            const float xh = (X.at(i, j) - static_cast<float>(mu)) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = xh * Gn.data[static_cast<std::size_t>(j)] + B.data[static_cast<std::size_t>(j)];
        }
    }
    const bool ng = wants(x.idx) || wants(gain.idx) || wants(bias.idx);
    int xi = x.idx, gi = gain.idx, bi = bias.idx;
    int idx = push(std::move(out), ng, nullptr, "layer_norm");
    if (ng)
        node(idx).backward = [xi, gi, bi, idx, xhat, inv_std](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& Gain = t.v(gi);
            const int n = G.cols();
            if (t.wants(gi)) {
                Tensor& gg = t.g(gi);
                for (int i = 0; i < G.rows(); ++i)
                    for (int j = 0; j < n; ++j)
                        gg.data[static_cast<std::size_t>(j)] += G.at(i, j) * xhat.at(i, j);
            }
            if (t.wants(bi)) {
                Tensor& gb = t.g(bi);
                for (int i = 0; i < G.rows(); ++i)
                    for (int j = 0; j < n; ++j) gb.data[static_cast<std::size_t>(j)] += G.at(i, j);
            }
            if (t.wants(xi)) {
                Tensor& gx = t.g(xi);
                for (int i = 0; i < G.rows(); ++i) {
                    double s1 = 0.0, s2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    for (int j = 0; j < n; ++j) {
                        const double dxh = static_cast<double>(G.at(i, j)) * Gain.data[static_cast<std::size_t>(j)];
                        s1 += dxh;
                        s2 += dxh * xhat.at(i, j);
                    }
                    s1 /= n;
                    s2 /= n;
                    const float is = inv_std[static_cast<std::size_t>(i)];
                    for (int j = 0; j < n; ++j) {
                        const float dxh = G.at(i, j) * Gain.data[static_cast<std::size_t>(j)];
                        gx.at(i, j) += is * (dxh - static_cast<float>(s1) -
                                             xhat.at(i, j) * static_cast<float>(s2));
                    }
                }
            }
        };
    return {idx};
}

ValueId Tape::clamp_min(ValueId a, float min_value) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out(A.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(A.data[i], min_value);
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "clamp_min");
    if (ng)
        node(idx).backward = [ai, idx, min_value](Tape& t) {
            const Tensor& G = t.g(idx);
            const Tensor& A2 = t.v(ai);
            for (std::size_t i = 0; i < G.data.size(); ++i)
                if (A2.data[i] > min_value) t.g(ai).data[i] += G.data[i];
        };
    return {idx};
}

ValueId Tape::rfft_magnitude_rows(ValueId x) {
    check(x);
    const Tensor& X = v(x.idx);
    const int n = X.cols();
    if (n < 2) throw ShapeError("rfft_magnitude_rows: need >= 2 features");
    const int bins = n / 2 + 1;
    Tensor out({X.rows(), bins});
    // Unit-direction spectrum saved for the pullback.
    Tensor ur({X.rows(), bins}), ui({X.rows(), bins});
    std::vector<float> row(static_cast<std::size_t>(n));
    for (int i = 0; i < X.rows(); ++i) {
        for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = X.at(i, j);
        Spectrum s = rfft(row);
        for (int k = 0; k < bins; ++k) {
            const float m = std::hypot(s.re[k], s.im[k]);
            out.at(i, k) = m;
            if (m > 1e-12f) {
                ur.at(i, k) = s.re[k] / m;
                ui.at(i, k) = s.im[k] / m;
            }  // else zero: magnitude not differentiable at 0, gradient dropped
        }
    }
    const bool ng = wants(x.idx);
    int xi = x.idx;
    int idx = push(std::move(out), ng, nullptr, "rfft_magnitude_rows");
    if (ng)
        node(idx).backward = [xi, idx, ur, ui, n, bins](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& gx = t.g(xi);
            constexpr double kTau = 6.283185307179586476925286766559;
            for (int i = 0; i < G.rows(); ++i) {
                for (int p = 0; p < n; ++p) {
                    double acc = 0.0;
                    for (int k = 0; k < bins; ++k) {
                        const float gk = G.at(i, k);
                        if (gk == 0.0f) continue;
                        const double th = kTau * k * p / n;
                        acc += static_cast<double>(gk) *
                               (ur.at(i, k) * std::cos(th) - ui.at(i, k) * std::sin(th));
                    }
                    gx.at(i, p) += static_cast<float>(acc);
                }
            }
        };
    return {idx};
}

ValueId Tape::embedding(ValueId table, const std::vector<int>& ids) {
    check(table);
    const Tensor& T = v(table.idx);
    const int vocab = T.rows(), d = T.cols();
    Tensor out({static_cast<int>(ids.size()), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || id >= vocab)
            throw IndexError("embedding id " + std::to_string(id) + " out of range [0," +
                             std::to_string(vocab) + ")");
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = T.at(id, j);
    }
    const bool ng = wants(table.idx);
    int ti = table.idx;
    int idx = push(std::move(out), ng, nullptr, "embedding");
    if (ng)
        node(idx).backward = [ti, idx, ids](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& gt = t.g(ti);
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < G.cols(); ++j)
                    gt.at(ids[i], j) += G.at(static_cast<int>(i), j);
        };
    return {idx};
}

ValueId Tape::concat_cols(ValueId a, ValueId b) {
    check(a);
    check(b);
    const Tensor& A = v(a.idx);
    const Tensor& B = v(b.idx);
    if (A.rows() != B.rows())
        throw ShapeError("concat_cols: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out({A.rows(), A.cols() + B.cols()});
    for (int i = 0; i < A.rows(); ++i) {
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j);
        for (int j = 0; j < B.cols(); ++j) out.at(i, A.cols() + j) = B.at(i, j);
    }
    const bool ng = wants(a.idx) || wants(b.idx);
    int ai = a.idx, bi = b.idx;
    const int ca = A.cols();
    int idx = push(std::move(out), ng, nullptr, "concat_cols");
    if (ng)
        node(idx).backward = [ai, bi, idx, ca](Tape& t) {
            const Tensor& G = t.g(idx);
            if (t.wants(ai)) {
                Tensor& ga = t.g(ai);
                for (int i = 0; i < ga.rows(); ++i)
                    for (int j = 0; j < ga.cols(); ++j) ga.at(i, j) += G.at(i, j);
            }
            if (t.wants(bi)) {
                Tensor& gb = t.g(bi);
                for (int i = 0; i < gb.rows(); ++i)
                    for (int j = 0; j < gb.cols(); ++j) gb.at(i, j) += G.at(i, ca + j);
            }
        };
    return {idx};
}

ValueId Tape::stack_rows(const std::vector<ValueId>& parts) {
    if (parts.empty()) throw ShapeError("stack_rows: no parts");
    int total = 0;
    const int n = value(parts[0]).cols();
    bool ng = false;
    for (ValueId p : parts) {
        check(p);
        if (v(p.idx).cols() != n) throw ShapeError("stack_rows: column mismatch");
        total += v(p.idx).rows();
        ng = ng || wants(p.idx);
    }
    Tensor out({total, n});
    int r = 0;
    for (ValueId p : parts) {
        const Tensor& P = v(p.idx);
        for (int i = 0; i < P.rows(); ++i, ++r)
            for (int j = 0; j < n; ++j) out.at(r, j) = P.at(i, j);
    }
    std::vector<int> pidx(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) pidx[i] = parts[i].idx;
    int idx = push(std::move(out), ng, nullptr, "stack_rows");
    if (ng)
        node(idx).backward = [pidx, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            int r = 0;
            for (int pi : pidx) {
                const int pr = t.v(pi).rows();
                if (t.wants(pi)) {
                    Tensor& gp = t.g(pi);
                    for (int i = 0; i < pr; ++i)
                        for (int j = 0; j < G.cols(); ++j) gp.at(i, j) += G.at(r + i, j);
                }
                r += pr;
            }
        };
    return {idx};
}

ValueId Tape::slice_rows(ValueId a, int r0, int r1) {
    check(a);
    const Tensor& A = v(a.idx);
    if (r0 < 0 || r1 > A.rows() || r0 >= r1)
        throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") of " + shape_str(A.shape));
    Tensor out({r1 - r0, A.cols()});
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(i - r0, j) = A.at(i, j);
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "slice_rows");
    if (ng)
        node(idx).backward = [ai, idx, r0](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& ga = t.g(ai);
            for (int i = 0; i < G.rows(); ++i)
                for (int j = 0; j < G.cols(); ++j) ga.at(r0 + i, j) += G.at(i, j);
        };
    return {idx};
}

ValueId Tape::slice_cols(ValueId a, int c0, int c1) {
    check(a);
    const Tensor& A = v(a.idx);
    if (c0 < 0 || c1 > A.cols() || c0 >= c1)
        throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") of " + shape_str(A.shape));
    Tensor out({A.rows(), c1 - c0});
    for (int i = 0; i < A.rows(); ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = A.at(i, j);
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "slice_cols");
    if (ng)
        node(idx).backward = [ai, idx, c0](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& ga = t.g(ai);
            for (int i = 0; i < G.rows(); ++i)
                for (int j = 0; j < G.cols(); ++j) ga.at(i, c0 + j) += G.at(i, j);
        };
    return {idx};
}

ValueId Tape::gather_cols(ValueId a, const std::vector<int>& cols) {
    check(a);
    const Tensor& A = v(a.idx);
    for (int c : cols)
        if (c < 0 || c >= A.cols()) throw IndexError("gather_cols: column " + std::to_string(c));
    Tensor out({A.rows(), static_cast<int>(cols.size())});
    for (int i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out.at(i, static_cast<int>(j)) = A.at(i, cols[j]);
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "gather_cols");
    if (ng)
        node(idx).backward = [ai, idx, cols](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& ga = t.g(ai);
            for (int i = 0; i < G.rows(); ++i)
                for (std::size_t j = 0; j < cols.size(); ++j)
                    ga.at(i, cols[j]) += G.at(i, static_cast<int>(j));
        };
    return {idx};
}

ValueId Tape::transpose(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out({A.cols(), A.rows()});
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "transpose");
    if (ng)
        node(idx).backward = [ai, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& ga = t.g(ai);
            for (int i = 0; i < G.rows(); ++i)
                for (int j = 0; j < G.cols(); ++j) ga.at(j, i) += G.at(i, j);
        };
    return {idx};
}

ValueId Tape::sum_all(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    double acc = 0.0;
    for (float x : A.data) acc += x;
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(Tensor::scalar(static_cast<float>(acc)), ng, nullptr, "sum_all");
    if (ng)
        node(idx).backward = [ai, idx](Tape& t) {
            const float gs = t.g(idx).data[0];
            for (float& gv : t.g(ai).data) gv += gs;
        };
    return {idx};
}

ValueId Tape::mean_all(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    double acc = 0.0;
    for (float x : A.data) acc += x;
    const float inv = 1.0f / static_cast<float>(A.numel());
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(Tensor::scalar(static_cast<float>(acc) * inv), ng, nullptr, "mean_all");
    if (ng)
        node(idx).backward = [ai, idx, inv](Tape& t) {
            const float gs = t.g(idx).data[0] * inv;
            for (float& gv : t.g(ai).data) gv += gs;
        };
    return {idx};
}

ValueId Tape::sum_rows(ValueId a) {
    check(a);
    const Tensor& A = v(a.idx);
    Tensor out({1, A.cols()});
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.data[static_cast<std::size_t>(j)] += A.at(i, j);
    const bool ng = wants(a.idx);
    int ai = a.idx;
    int idx = push(std::move(out), ng, nullptr, "sum_rows");
    if (ng)
        node(idx).backward = [ai, idx](Tape& t) {
            const Tensor& G = t.g(idx);
            Tensor& ga = t.g(ai);
            for (int i = 0; i < ga.rows(); ++i)
                for (int j = 0; j < ga.cols(); ++j) ga.at(i, j) += G.data[static_cast<std::size_t>(j)];
        };
    return {idx};
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

void Tape::backward(ValueId loss) {
    check(loss);
    if (backward_done_) throw InternalError("backward() called twice on one tape");
    const Node& ln = node(loss.idx);
    if (ln.value.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(ln.value.shape));

    for (std::size_t i = 0; i <= static_cast<std::size_t>(loss.idx); ++i)
        if (nodes_[i].needs_grad) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
    backward_done_ = true;
    if (!ln.needs_grad) return;  // loss independent of all parameters

    node(loss.idx).grad.data[0] = 1.0f;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = node(i);
        if (n.needs_grad && n.backward) n.backward(*this);
    }
}

GradientMap Tape::gradients() const {
    if (!backward_done_) throw InternalError("gradients() before backward()");
    GradientMap out;
    for (int idx : param_nodes_) {
        const Node& n = node(idx);
        Tensor g = n.grad.numel() ? n.grad : Tensor::zeros(n.value.shape);
        auto it = out.find(n.param->name);
        if (it == out.end()) {
            out.emplace(n.param->name, std::move(g));
        } else {
            for (std::size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
        }
    }
    return out;
}

void Tape::accumulate_param_grads(float scale) {
    if (!backward_done_) throw InternalError("accumulate_param_grads() before backward()");
    for (int idx : param_nodes_) {
        Node& n = node(idx);
        if (!n.grad.numel()) continue;
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            n.param->grad.data[i] += scale * n.grad.data[i];
    }
}

}  // namespace horai
