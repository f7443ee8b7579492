#include "horai/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace horai {

ValueId ar_loss(Tape& t, ValueId predictions, ValueId targets) {
    const int n = t.rows(predictions), s = t.cols(predictions);
    if (n != t.rows(targets) || s != t.cols(targets))
        throw ShapeError("ar_loss: predictions " + std::to_string(n) + "x" + std::to_string(s) +
                         " vs targets " + std::to_string(t.rows(targets)) + "x" +
                         std::to_string(t.cols(targets)));
    if (n < 2) throw ShapeError("ar_loss: need at least 2 rows, the last row is unsupervised");
    ValueId dp = t.slice_rows(predictions, 0, n - 1);
    ValueId dt = t.slice_rows(targets, 0, n - 1);
    ValueId diff = t.sub(dp, dt);
    return t.scale(t.sum_all(t.mul(diff, diff)), 1.0f / static_cast<float>((n - 1) * s));
}

float ar_loss_value(const Tensor& predictions, const Tensor& targets) {
    Tape t;
    return t.value(ar_loss(t, t.constant(predictions), t.constant(targets))).data[0];
}

Tensor make_targets(const Tensor& patches_norm) {
    const int n = patches_norm.rows(), s = patches_norm.cols();
    Tensor out({n, s});
    for (int i = 0; i + 1 < n; ++i)
        for (int j = 0; j < s; ++j) out.at(i, j) = patches_norm.at(i + 1, j);
    return out;  // last row stays zero and is never read by the loss
}

bool early_stop(const std::vector<float>& history, int patience) {
    if (history.empty()) throw ValueError("early_stop: empty history");
    float best = history[0];
    int stalled = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i] < best - 1e-6f) {
            best = history[i];
            stalled = 0;
        } else {
            ++stalled;
        }
    }
    return stalled >= patience;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(ParamStore& params, const TrainConfig& cfg)
    : params_(params), beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_.push_back(Tensor::zeros(params_.at(i).value.shape));
        v_.push_back(Tensor::zeros(params_.at(i).value.shape));
    }
}

void Adam::step(float lr) {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = params_.at(i);
        if (!p.trainable) continue;
        float* m = m_[i].data.data();
        float* v = v_[i].data.data();
        const float* g = p.grad.data.data();
        float* w = p.value.data.data();
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
            const float mhat = m[j] / bc1;
            const float vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(HoraiModel& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), adam_(model.params(), cfg_), rng_(cfg_.seed) {
    cfg_.validate();
}

float Trainer::lr_at(int step) const {
    if (cfg_.lr_schedule == "cosine" && planned_total_steps_ > 0) {
        const float frac = std::min(1.0f, static_cast<float>(step) / planned_total_steps_);
        return cfg_.lr * 0.5f * (1.0f + std::cos(3.14159265f * frac));
    }
    return cfg_.lr;
}

EpochStats Trainer::train_epoch(const std::vector<MultimodalSample>& samples, int epoch,
                                std::ostream* log) {
    if (samples.empty()) throw ValueError("train_epoch: empty sample set");
    EpochStats stats;
    stats.expert_counts.assign(static_cast<std::size_t>(model_.config().n_experts), 0);

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng_.index(i)]);

    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        if (cfg_.max_steps > 0 && global_step_ >= cfg_.max_steps) break;
        const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
        const int batch_n = static_cast<int>(end - start);
        const int batch_id = static_cast<int>(start / cfg_.batch_size);

        model_.params().zero_grads();
        double batch_loss = 0.0;
        for (std::size_t bi = start; bi < end; ++bi) {
            const MultimodalSample& sample = samples[order[bi]];
            Tape tape;
            auto fwd = model_.forward(tape, sample, cfg_.load_balance);
            ValueId targets = tape.constant(make_targets(sample.patches_norm));
            ValueId loss = ar_loss(tape, fwd.predictions, targets);
            if (cfg_.load_balance && fwd.aux_importance.valid())
                loss = tape.add(loss, tape.scale(fwd.aux_importance, cfg_.lb_lambda));
            const float lval = tape.value(loss).data[0];
            if (!std::isfinite(lval))
                throw ValueError("NaN loss in epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_id) + " window " + sample.window_id);
            batch_loss += lval;
            tape.backward(loss);
            tape.accumulate_param_grads(1.0f / static_cast<float>(batch_n));
            for (const auto& d : fwd.decisions)
                for (int e : d.selected) ++stats.expert_counts[static_cast<std::size_t>(e)];
        }
        batch_loss /= batch_n;

        double gnorm = 0.0;
        ParamStore& ps = model_.params();
        for (std::size_t i = 0; i < ps.size(); ++i)
            for (float g : ps.at(i).grad.data) gnorm += static_cast<double>(g) * g;
        gnorm = std::sqrt(gnorm);
        if (!std::isfinite(gnorm))
            throw ValueError("non-finite gradient norm in epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(batch_id));
        stats.max_grad_norm = std::max(stats.max_grad_norm, gnorm);

        adam_.step(lr_at(global_step_));
        ++global_step_;
        ++stats.steps;
        loss_sum += batch_loss;
        ++loss_count;
        if (log) {
            nlohmann::json j;
            j["epoch"] = epoch;
            j["step"] = global_step_;
            j["loss"] = batch_loss;
            j["expert_counts"] = stats.expert_counts;
            (*log) << j.dump() << "\n";
        }
    }
    stats.mean_loss = loss_count ? loss_sum / loss_count : 0.0;
    return stats;
}

float Trainer::evaluate(const std::vector<MultimodalSample>& samples) const {
    if (samples.empty()) throw ValueError("evaluate: empty sample set");
    double sum = 0.0;
    for (const auto& sample : samples) {
        Tape tape;
        auto fwd = model_.forward(tape, sample);
        sum += ar_loss_value(tape.value(fwd.predictions), make_targets(sample.patches_norm));
    }
    return static_cast<float>(sum / samples.size());
}

FitResult Trainer::fit(const std::vector<MultimodalSample>& train,
                       const std::vector<MultimodalSample>& val, std::ostream* log) {
    const int steps_per_epoch =
        static_cast<int>((train.size() + cfg_.batch_size - 1) / cfg_.batch_size);
    planned_total_steps_ = cfg_.max_steps > 0 ? cfg_.max_steps : cfg_.epochs * steps_per_epoch;

    FitResult result;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        EpochStats stats = train_epoch(train, epoch, log);
        result.train_losses.push_back(static_cast<float>(stats.mean_loss));
        if (!val.empty()) {
            result.val_losses.push_back(evaluate(val));
            if (early_stop(result.val_losses, cfg_.patience)) {
                result.stopped_early = true;
                result.epochs_run = epoch + 1;
                return result;
            }
        }
        if (cfg_.max_steps > 0 && global_step_ >= cfg_.max_steps) {
            result.epochs_run = epoch + 1;
            return result;
        }
    }
    result.epochs_run = cfg_.epochs;
    return result;
}

std::string Trainer::rng_state() const {
    std::ostringstream out;
    out << rng_.engine();
    return out.str();
}

void Trainer::restore_rng_state(const std::string& state) {
    std::istringstream in(state);
    in >> rng_.engine();
    if (!in) throw CorruptionError("bad RNG state string");
}

}  // namespace horai
