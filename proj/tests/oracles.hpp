// Independent reference implementations used only by tests. Each oracle is a
// direct transcription of the defining formula, kept free of the library's
// fast paths so the two can disagree.
#pragma once
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "horai/tape.hpp"
#include "horai/tensor.hpp"

namespace oracles {

constexpr double kPi = 3.141592653589793238462643383279502884;

// O(L^2) DFT restricted to non-negative frequencies. Double precision.
struct HalfSpectrum {
    std::vector<double> re, im;
};

inline HalfSpectrum naive_dft(const std::vector<float>& x) {
    const int L = static_cast<int>(x.size());
    const int bins = L / 2 + 1;
    HalfSpectrum s;
    s.re.resize(bins);
    s.im.resize(bins);
    for (int k = 0; k < bins; ++k) {
        double re = 0.0, im = 0.0;
        for (int n = 0; n < L; ++n) {
            const double th = 2.0 * kPi * k * n / L;
            re += x[n] * std::cos(th);
            im -= x[n] * std::sin(th);
        }
        s.re[k] = re;
        s.im[k] = im;
    }
    return s;
}

// Central finite differences against tape gradients.
//
// `build` must re-run the identical forward computation on a fresh tape.
// rel err = |ad - fd| / max(1, |ad|, |fd|), i.e. atol = rtol = threshold.
// The unit floor matters: float32 forward evaluation noise puts ~2e-4 of
// absolute jitter on the difference quotient at step 1e-3, so a pure ratio is
// meaningless for near-zero gradients.
struct GradCheck {
    double max_rel_err = 0.0;
    std::string worst;  // "param[i]"
};

inline GradCheck check_gradients(horai::ParamStore& ps,
                                 const std::function<horai::ValueId(horai::Tape&)>& build,
                                 float h = 1e-3f, std::size_t max_entries_per_param = 16) {
    using horai::Tape;
    Tape tape;
    horai::ValueId loss = build(tape);
    tape.backward(loss);
    horai::GradientMap grads = tape.gradients();

    auto eval = [&]() -> double {
        Tape t2;
        return t2.value(build(t2)).data[0];
    };

    GradCheck result;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        horai::Parameter& p = ps.at(pi);
        auto git = grads.find(p.name);
        const std::size_t n = p.value.numel();
        const std::size_t step = std::max<std::size_t>(1, n / max_entries_per_param);
        for (std::size_t j = 0; j < n; j += step) {
            const float saved = p.value.data[j];
            p.value.data[j] = saved + h;
            const double fp = eval();
            p.value.data[j] = saved - h;
            const double fm = eval();
            p.value.data[j] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = git == grads.end() ? 0.0 : git->second.data[j];
            const double rel = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1.0});
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = p.name + "[" + std::to_string(j) + "]";
            }
        }
    }
    return result;
}

// Quadratic reference for flow attention: materializes every pairwise
// phi(Q_i) . phi(K_j) product. Mirrors the published formula term by term.
inline horai::Tensor flow_attention_quadratic(const horai::Tensor& q, const horai::Tensor& k,
                                              const horai::Tensor& v, float eps) {
    const int nq = q.rows(), nk = k.rows(), d = q.cols();
    auto sig = [](float x) { return 1.0f / (1.0f + std::exp(-x)); };
    std::vector<std::vector<double>> pq(nq, std::vector<double>(d)), pk(nk, std::vector<double>(d));
    for (int i = 0; i < nq; ++i)
        for (int c = 0; c < d; ++c) pq[i][c] = sig(q.at(i, c));
    for (int j = 0; j < nk; ++j)
        for (int c = 0; c < d; ++c) pk[j][c] = sig(k.at(j, c));

    std::vector<double> incoming(nq, 0.0);  // I_i = phi(Q_i) . sum_j phi(K_j)
    for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nk; ++j)
            for (int c = 0; c < d; ++c) incoming[i] += pq[i][c] * pk[j][c];
    for (int i = 0; i < nq; ++i) incoming[i] = std::max(incoming[i], static_cast<double>(eps));

    std::vector<double> competition(nk, 0.0);  // Ohat_j = phi(K_j) . sum_i phi(Q_i)/I_i
    for (int j = 0; j < nk; ++j)
        for (int i = 0; i < nq; ++i)
            for (int c = 0; c < d; ++c) competition[j] += pk[j][c] * pq[i][c] / incoming[i];

    // softmax over key positions
    double mx = competition[0];
    for (double x : competition) mx = std::max(mx, x);
    std::vector<double> soft(nk);
    double z = 0.0;
    for (int j = 0; j < nk; ++j) {
        soft[j] = std::exp(competition[j] - mx);
        z += soft[j];
    }
    for (double& s : soft) s /= z;

    horai::Tensor out({nq, d});
    for (int i = 0; i < nq; ++i)
        for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int j = 0; j < nk; ++j) {
                double qk = 0.0;
                for (int e = 0; e < d; ++e) qk += pq[i][e] * pk[j][e];
                acc += qk / incoming[i] * soft[j] * v.at(j, c);
            }
            out.at(i, c) = static_cast<float>(acc);
        }
    return out;
}

// Double-precision reference for the two-layer gelu feed-forward used by the
// expert networks: y = gelu(x W1 + b1) W2 + b2.
inline std::vector<double> ffn_reference(const std::vector<float>& x, const horai::Tensor& w1,
                                         const horai::Tensor& b1, const horai::Tensor& w2,
                                         const horai::Tensor& b2) {
    const int d_in = w1.rows(), hidden = w1.cols(), d_out = w2.cols();
    std::vector<double> h(hidden, 0.0);
    for (int j = 0; j < hidden; ++j) {
        double acc = b1.data[static_cast<std::size_t>(j)];
        for (int i = 0; i < d_in; ++i) acc += static_cast<double>(x[i]) * w1.at(i, j);
        const double u = 0.7978845608028654 * (acc + 0.044715 * acc * acc * acc);
        h[j] = 0.5 * acc * (1.0 + std::tanh(u));
    }
    std::vector<double> y(d_out, 0.0);
    for (int j = 0; j < d_out; ++j) {
        double acc = b2.data[static_cast<std::size_t>(j)];
        for (int i = 0; i < hidden; ++i) acc += h[i] * w2.at(i, j);
        y[j] = acc;
    }
    return y;
}

// Dense softmax mixture over all M experts; the K = M case must match it.
inline std::vector<double> dense_moe_reference(const std::vector<float>& h_token,
                                               const std::vector<float>& logits,
                                               horai::ParamStore& ps,
                                               const std::string& layer_prefix, int n_experts) {
    double mx = logits[0];
    for (float l : logits) mx = std::max(mx, static_cast<double>(l));
    std::vector<double> w(logits.size());
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        w[j] = std::exp(logits[j] - mx);
        z += w[j];
    }
    for (double& x : w) x /= z;

    std::vector<double> out;
    for (int e = 0; e < n_experts; ++e) {
        const std::string p = layer_prefix + ".expert" + std::to_string(e);
        auto y = ffn_reference(h_token, ps.get(p + ".w1").value, ps.get(p + ".b1").value,
                               ps.get(p + ".w2").value, ps.get(p + ".b2").value);
        if (out.empty()) out.assign(y.size(), 0.0);
        for (std::size_t i = 0; i < y.size(); ++i) out[i] += w[static_cast<std::size_t>(e)] * y[i];
    }
    return out;
}

}  // namespace oracles
