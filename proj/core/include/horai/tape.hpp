#pragma once
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "horai/tensor.hpp"

namespace horai {

// Persistent named parameter with a gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        value.requires_grad = true;
        grad = Tensor::zeros(value.shape);
    }
};

// Ordered registry; creation order fixes optimizer iteration and checkpoint
// layout, so runs are reproducible.
class ParamStore {
  public:
    Parameter& create(std::string name, Shape shape, float init_std, Rng& rng);
    Parameter& create_with(std::string name, Tensor value);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Parameter& at(std::size_t i) { return *params_[i]; }
    const Parameter& at(std::size_t i) const { return *params_[i]; }

    std::size_t total_count() const;  // total scalar parameters
    void zero_grads();
    void set_trainable_prefix(const std::string& prefix, bool trainable);

  private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

struct ValueId {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

using GradientMap = std::map<std::string, Tensor>;

// Reverse-mode tape over 2-D float tensors. One tape records one forward
// computation; backward walks the recorded nodes in reverse creation order,
// which is a topological order by construction.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves ----
    ValueId constant(Tensor t);
    ValueId input(Tensor t);  // differentiable iff t.requires_grad
    ValueId param(Parameter& p);

    // ---- arithmetic ----
    ValueId matmul(ValueId a, ValueId b, bool trans_a = false, bool trans_b = false);
    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId add_rowvec(ValueId a, ValueId row);   // a[i,:] + row[0,:]
    ValueId mul_rowwise(ValueId a, ValueId col);  // a[i,:] * col[i,0]
    ValueId div_rowwise(ValueId a, ValueId col);  // a[i,:] / col[i,0]
    ValueId scale(ValueId a, float c);

    // ---- nonlinearities ----
    ValueId sigmoid(ValueId a);
    ValueId gelu(ValueId a);
    ValueId softmax_rows(ValueId a);
    // mask: one byte per element, 0 = excluded. Excluded entries output 0;
    // rows with no allowed entry output all zeros.
    ValueId masked_softmax_rows(ValueId a, const std::vector<std::uint8_t>& mask);
    ValueId layer_norm(ValueId x, ValueId gain, ValueId bias, float eps = 1e-5f);
    ValueId clamp_min(ValueId a, float min_value);

    // ---- frequency ----
    // Per-row real-FFT coefficient magnitudes: [N, D] -> [N, D/2+1].
    ValueId rfft_magnitude_rows(ValueId x);

    // ---- structure ----
    ValueId embedding(ValueId table, const std::vector<int>& ids);
    ValueId concat_cols(ValueId a, ValueId b);
    ValueId stack_rows(const std::vector<ValueId>& parts);
    ValueId slice_rows(ValueId a, int r0, int r1);  // half-open [r0, r1)
    ValueId slice_cols(ValueId a, int c0, int c1);
    ValueId gather_cols(ValueId a, const std::vector<int>& cols);
    ValueId transpose(ValueId a);

    // ---- reductions ----
    ValueId sum_all(ValueId a);   // -> [1,1]
    ValueId mean_all(ValueId a);  // -> [1,1]
    ValueId sum_rows(ValueId a);  // [N,D] -> [1,D]

    // ---- access ----
    const Tensor& value(ValueId id) const;
    const Tensor& grad(ValueId id) const;  // valid after backward()
    int rows(ValueId id) const { return value(id).rows(); }
    int cols(ValueId id) const { return value(id).cols(); }

    // ---- reverse pass ----
    void backward(ValueId loss);
    GradientMap gradients() const;                  // parameter name -> gradient
    void accumulate_param_grads(float scale = 1.0f);  // adds into Parameter::grad

    // ---- diagnostics ----
    std::size_t allocated_floats() const { return allocated_; }
    std::size_t num_nodes() const { return nodes_.size(); }
    void set_check_finite(bool on) { check_finite_ = on; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&)> backward;
    };

    int push(Tensor value, bool needs_grad, std::function<void(Tape&)> bw,
             const char* op_name);
    Node& node(int idx) { return nodes_[static_cast<std::size_t>(idx)]; }
    const Node& node(int idx) const { return nodes_[static_cast<std::size_t>(idx)]; }
    bool wants(int idx) const { return nodes_[static_cast<std::size_t>(idx)].needs_grad; }
    Tensor& g(int idx) { return nodes_[static_cast<std::size_t>(idx)].grad; }
    const Tensor& v(int idx) const { return nodes_[static_cast<std::size_t>(idx)].value; }
    void check(ValueId id) const;

    std::deque<Node> nodes_;  // deque: references from value() stay valid as ops append
    std::vector<int> param_nodes_;
    std::size_t allocated_ = 0;
    bool check_finite_ = true;
    bool backward_done_ = false;
};

// C += (or =) op(A) * op(B); shared by forward and backward passes.
void matmul_raw(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b,
                Tensor& out, bool accumulate);

}  // namespace horai
