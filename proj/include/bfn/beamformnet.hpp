#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "bfn/array_model.hpp"
#include "bfn/autodiff/adam.hpp"
#include "bfn/autodiff/checkpoint.hpp"
#include "bfn/autodiff/gru.hpp"
#include "bfn/autodiff/ops.hpp"
#include "bfn/autodiff/params.hpp"
#include "bfn/classical.hpp"
#include "bfn/complexlin.hpp"
#include "bfn/error.hpp"
#include "bfn/metrics.hpp"
#include "bfn/rng.hpp"
#include "bfn/scenario.hpp"

namespace bfn {

/// Widths of one BeamformNet instance. Zero hidden widths resolve to their
/// defaults in resolved().
struct ModelConfig {
    std::size_t M = 8;
    std::size_t R = 181;
    std::size_t T_train = 50;
    std::size_t E = 32;
    std::size_t enc_hidden = 0;    // per direction; default E/2
    std::size_t align_hidden = 0;  // default E
    std::size_t filt_hidden = 0;   // per direction; default 2E
    std::size_t proj_hidden = 0;   // default E
    std::uint64_t seed = 7;

    ModelConfig resolved() const {
        ModelConfig c = *this;
        if (c.enc_hidden == 0) c.enc_hidden = c.E / 2;
        if (c.align_hidden == 0) c.align_hidden = c.E;
        if (c.filt_hidden == 0) c.filt_hidden = 2 * c.E;
        if (c.proj_hidden == 0) c.proj_hidden = c.E;
        c.validate();
        return c;
    }

    void validate() const {
        if (E == 0 || E % 2 != 0) throw validation_error("model E must be a positive even number");
        if (T_train < 1) throw validation_error("model T_train must be at least 1");
        if (M < 2) throw validation_error("model M must be at least 2");
        if (R < 1) throw validation_error("model R must be at least 1");
        if (enc_hidden == 0 || align_hidden == 0 || filt_hidden == 0 || proj_hidden == 0) {
            throw validation_error("model hidden widths must be at least 1");
        }
        if (2 * enc_hidden != E) throw validation_error("enc_hidden must equal E/2 so both encoders emit E features");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"M", c.M},           {"R", c.R},
            {"T_train", c.T_train}, {"E", c.E},
            {"enc_hidden", c.enc_hidden}, {"align_hidden", c.align_hidden},
            {"filt_hidden", c.filt_hidden}, {"proj_hidden", c.proj_hidden},
            {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.M = j.at("M").get<std::size_t>();
    c.R = j.at("R").get<std::size_t>();
    c.T_train = j.at("T_train").get<std::size_t>();
    c.E = j.at("E").get<std::size_t>();
    c.enc_hidden = j.at("enc_hidden").get<std::size_t>();
    c.align_hidden = j.at("align_hidden").get<std::size_t>();
    c.filt_hidden = j.at("filt_hidden").get<std::size_t>();
    c.proj_hidden = j.at("proj_hidden").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// ---------------------------------------------------------------------------
// Asymmetric loss

struct AslConfig {
    double gamma_pos = 1.0;
    double gamma_neg = 4.0;
    double eta = 0.05;
};

/// Sum over grids of −(1−ρ)^γ₊·log ρ on positives and −ρ_m^γ₋·log(1−ρ_m),
/// ρ_m = max(ρ−η, 0), on negatives. Logs are clamped at 1e-12.
inline double asl_loss(const std::vector<double>& rho, const std::vector<int>& labels, const AslConfig& cfg = {}) {
    if (rho.size() != labels.size()) {
        throw shape_error("asl_loss: " + std::to_string(rho.size()) + " probabilities vs " + std::to_string(labels.size()) + " labels");
    }
    auto clog = [](double x) { return std::log(std::max(x, ad::kLogClamp)); };
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (labels[i]) {
            acc -= std::pow(1.0 - rho[i], cfg.gamma_pos) * clog(rho[i]);
        } else {
            const double m = std::max(rho[i] - cfg.eta, 0.0);
            acc -= std::pow(m, cfg.gamma_neg) * clog(1.0 - m);
        }
    }
    return acc;
}

namespace detail {

inline int integral_gamma(double g, const char* which) {
    if (g < 0.0 || std::floor(g) != g) throw validation_error(std::string("asl: ") + which + " must be a non-negative integer");
    return static_cast<int>(g);
}

}  // namespace detail

/// Tensor form of asl_loss over an R×1 (or 1×R) probability column.
inline ad::Tensor asl_loss(const ad::Tensor& rho, const std::vector<int>& labels, const AslConfig& cfg = {}) {
    using namespace ad;
    if (rho.size() != labels.size()) {
        throw shape_error("asl_loss: " + std::to_string(rho.size()) + " probabilities vs " + std::to_string(labels.size()) + " labels");
    }
    const int gp = bfn::detail::integral_gamma(cfg.gamma_pos, "gamma_pos");
    const int gn = bfn::detail::integral_gamma(cfg.gamma_neg, "gamma_neg");
    std::vector<double> pos(labels.size()), neg(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        pos[i] = labels[i] ? 1.0 : 0.0;
        neg[i] = 1.0 - pos[i];
    }
    const Tensor pos_mask = Tensor::constant(rho.rows(), rho.cols(), std::move(pos));
    const Tensor neg_mask = Tensor::constant(rho.rows(), rho.cols(), std::move(neg));
    const Tensor one_minus = add_scalar(scalar_scale(rho, -1.0), 1.0);
    const Tensor pos_term = mul(int_pow(one_minus, gp), log(rho));
    const Tensor m = shifted_hinge(rho, cfg.eta);
    const Tensor neg_term = mul(int_pow(m, gn), log(add_scalar(scalar_scale(m, -1.0), 1.0)));
    return scalar_scale(sum(add(mul(pos_mask, pos_term), mul(neg_mask, neg_term))), -1.0);
}

// ---------------------------------------------------------------------------
// Model

/// affine → relu → affine
struct Head {
    ad::Tensor W1, b1, W2, b2;

    static Head create(ad::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
                       Rng& rng) {
        Head h;
        h.W1 = store.add_weight(prefix + ".W1", in, hidden, rng);
        h.b1 = store.add_zeros(prefix + ".b1", 1, hidden);
        h.W2 = store.add_weight(prefix + ".W2", hidden, out, rng);
        h.b2 = store.add_zeros(prefix + ".b2", 1, out);
        return h;
    }

    ad::Tensor operator()(const ad::Tensor& x) const { return ad::linear(ad::relu(ad::linear(x, W1, b1)), W2, b2); }
};

/// Per-sample outputs of a batched forward pass.
struct ForwardBatch {
    std::vector<ad::Tensor> re_b;  // R×M
    std::vector<ad::Tensor> im_b;  // R×M
    std::vector<ad::Tensor> P;     // R×1
    std::vector<ad::Tensor> rho;   // R×1
    ad::Tensor attention;          // (T·batch)×R, rows indexed t·batch + s
};

struct NetOutput {
    SpatialFilter filter;
    SpatialSpectrum spectrum;
};

/// [Im; Re] stacking of a complex column into one 1×2M row.
inline std::vector<double> im_re_row(const ComplexMatrix& m, std::size_t col) {
    std::vector<double> row(2 * m.rows());
    for (std::size_t j = 0; j < m.rows(); ++j) {
        row[j] = m.im(j, col);
        row[m.rows() + j] = m.re(j, col);
    }
    return row;
}

class BeamformNet {
public:
    explicit BeamformNet(const ModelConfig& cfg) : cfg_(cfg.resolved()) {
        Rng rng(cfg_.seed);
        const std::size_t in = 2 * cfg_.M, E = cfg_.E;
        a_enc_ = ad::BiGruParams::create(store_, "a_enc", in, cfg_.enc_hidden, rng);
        x_enc_ = ad::BiGruParams::create(store_, "x_enc", in, cfg_.enc_hidden, rng);
        head_v_ = Head::create(store_, "align_v", E, cfg_.align_hidden, E, rng);
        head_k_ = Head::create(store_, "align_k", E, cfg_.align_hidden, E, rng);
        head_q_ = Head::create(store_, "align_q", E, cfg_.align_hidden, E, rng);
        filt_ = ad::BiGruParams::create(store_, "filt", E, cfg_.filt_hidden, rng);
        grid_W_ = store_.add_weight("grid.W", 2 * cfg_.filt_hidden, cfg_.R, rng);
        grid_b_ = store_.add_zeros("grid.b", 1, cfg_.R);
        proj_ = Head::create(store_, "proj", cfg_.T_train, cfg_.proj_hidden, 2 * cfg_.M, rng);
    }

    BeamformNet(const BeamformNet&) = delete;
    BeamformNet& operator=(const BeamformNet&) = delete;
    BeamformNet(BeamformNet&&) = default;
    BeamformNet& operator=(BeamformNet&&) = default;

    const ModelConfig& config() const noexcept { return cfg_; }
    ad::ParamStore& params() noexcept { return store_; }
    const ad::ParamStore& params() const noexcept { return store_; }
    std::size_t parameter_count() const { return store_.count(); }

    /// Batched forward pass; the manifold path runs once for the batch.
    /// Ops are taped when a tape is active.
    ForwardBatch forward(const ComplexMatrix& A, const std::vector<const ComplexMatrix*>& xs) const {
        using namespace ad;
        const std::size_t M = cfg_.M, R = cfg_.R, T = cfg_.T_train;
        if (A.rows() != M || A.cols() != R) {
            throw shape_error("beamformnet: manifold " + A.shape_str() + " but model expects " + std::to_string(M) + "x" +
                              std::to_string(R));
        }
        if (xs.empty()) throw validation_error("beamformnet: empty batch");
        for (const auto* x : xs) {
            if (x->rows() != M) throw shape_error("beamformnet: X " + x->shape_str() + " but model expects M=" + std::to_string(M));
            if (x->cols() != T) {
                throw padding_required_error("beamformnet: X has " + std::to_string(x->cols()) + " snapshots, model needs T_train=" +
                                             std::to_string(T) + "; pad with infer_doa or resample");
            }
        }
        const std::size_t nb = xs.size();

        // Manifold encoder over the grid sequence.
        std::vector<Tensor> a_steps(R);
        for (std::size_t r = 0; r < R; ++r) a_steps[r] = Tensor::constant(1, 2 * M, im_re_row(A, r));
        const Tensor a_prime = concat_rows(bigru_sequence(a_enc_, a_steps));  // R×E
        const Tensor a_v = head_v_(a_prime);
        const Tensor a_k_t = transpose(head_k_(a_prime));  // E×R

        // Snapshot encoder over time, batch in rows.
        std::vector<Tensor> x_steps(T);
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> rows(nb * 2 * M);
            for (std::size_t s = 0; s < nb; ++s) {
                const auto row = im_re_row(*xs[s], t);
                std::copy(row.begin(), row.end(), rows.begin() + static_cast<std::ptrdiff_t>(s * 2 * M));
            }
            x_steps[t] = Tensor::constant(nb, 2 * M, std::move(rows));
        }
        const Tensor x_prime = concat_rows(bigru_sequence(x_enc_, x_steps));  // (T·nb)×E, row t·nb + s
        const Tensor x_q = head_q_(x_prime);

        ForwardBatch out;
        out.attention = softmax_rows(scalar_scale(matmul(x_q, a_k_t), 1.0 / std::sqrt(static_cast<double>(R))));
        const Tensor o = matmul(out.attention, a_v);  // (T·nb)×E

        std::vector<Tensor> o_steps(T);
        for (std::size_t t = 0; t < T; ++t) o_steps[t] = slice_rows(o, t * nb, nb);
        const Tensor f = concat_rows(bigru_sequence(filt_, o_steps));  // (T·nb)×2fh
        const Tensor b_prime = linear(f, grid_W_, grid_b_);             // (T·nb)×R

        // Row s·R + i holds sample s, grid i, across time.
        const Tensor per_grid = transpose(reshape(b_prime, T, nb * R));  // (nb·R)×T
        const Tensor b_planes = proj_(per_grid);                          // (nb·R)×2M
        const Tensor im_all = slice_cols(b_planes, 0, M);
        const Tensor re_all = slice_cols(b_planes, M, M);

        for (std::size_t s = 0; s < nb; ++s) {
            const Tensor im_b = slice_rows(im_all, s * R, R);
            const Tensor re_b = slice_rows(re_all, s * R, R);
            const ComplexMatrix& X = *xs[s];
            const Tensor re_x = Tensor::constant(M, T, X.re_plane());
            const Tensor im_x = Tensor::constant(M, T, X.im_plane());
            const Tensor re_p = sub(matmul(re_b, re_x), matmul(im_b, im_x));
            const Tensor im_p = add(matmul(re_b, im_x), matmul(im_b, re_x));
            const Tensor p = mean_axis(add(square(re_p), square(im_p)), 1);
            out.re_b.push_back(re_b);
            out.im_b.push_back(im_b);
            out.P.push_back(p);
            out.rho.push_back(tanh(p));
        }
        return out;
    }

    /// Untaped single-sample forward returning the complex filter and spectrum.
    NetOutput run(const ComplexMatrix& A, const ComplexMatrix& X) const {
        const auto batch = forward(A, {&X});
        return to_output(batch, 0);
    }

    static NetOutput to_output(const ForwardBatch& batch, std::size_t s) {
        const auto& re = batch.re_b[s];
        const auto& im = batch.im_b[s];
        NetOutput out;
        out.filter = {ComplexMatrix(re.rows(), re.cols(), re.value(), im.value()), "beamformnet"};
        out.spectrum.P = batch.P[s].value();
        out.spectrum.rho = batch.rho[s].value();
        return out;
    }

private:
    ModelConfig cfg_;
    ad::ParamStore store_;
    ad::BiGruParams a_enc_, x_enc_, filt_;
    Head head_v_, head_k_, head_q_, proj_;
    ad::Tensor grid_W_, grid_b_;
};

inline std::size_t parameter_count(const ModelConfig& cfg) { return BeamformNet(cfg).parameter_count(); }

/// Copy of `model` with its own parameter storage.
inline BeamformNet clone(const BeamformNet& model) {
    BeamformNet out(model.config());
    out.params().assign_from(model.params());
    return out;
}

/// Mean ASL over the batch, taped when a tape is active.
inline ad::Tensor batch_loss(const ForwardBatch& fb, const std::vector<std::vector<int>>& labels, const AslConfig& asl) {
    std::vector<ad::Tensor> terms;
    terms.reserve(fb.rho.size());
    for (std::size_t s = 0; s < fb.rho.size(); ++s) terms.push_back(asl_loss(fb.rho[s], labels[s], asl));
    return ad::scalar_scale(ad::sum(ad::concat_rows(terms)), 1.0 / static_cast<double>(terms.size()));
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t batch = 32;
    double lr = 1e-4;
    std::size_t epochs = 100;
    std::size_t patience = 20;
    double threshold = 0.5;
    std::uint64_t seed = 7;
    AslConfig asl{};
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean of batch losses
    double val_f1 = 0.0;
};

struct TrainResult {
    BeamformNet model;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
};

namespace detail {

inline void check_dataset(const ModelConfig& cfg, const std::vector<Scenario>& data, const char* which) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        if (s.X.rows() != cfg.M || s.X.cols() != cfg.T_train) {
            throw validation_error(std::string(which) + " sample " + std::to_string(i) + " has X " + s.X.shape_str() +
                                   " but the model expects " + std::to_string(cfg.M) + "x" + std::to_string(cfg.T_train));
        }
        for (auto l : s.grid_labels)
            if (l >= cfg.R) throw validation_error(std::string(which) + " sample " + std::to_string(i) + " has a label outside the grid");
    }
}

}  // namespace detail

/// One Adam step on a batch; returns the batch loss before the update.
inline double train_step(BeamformNet& model, ad::Adam& opt, const ComplexMatrix& A, const std::vector<const Scenario*>& batch,
                         const AslConfig& asl) {
    std::vector<const ComplexMatrix*> xs;
    std::vector<std::vector<int>> labels;
    for (const auto* s : batch) {
        xs.push_back(&s->X);
        labels.push_back(s->label_vector(model.config().R));
    }
    model.params().zero_grad();
    ad::Tape tape;
    double value = 0.0;
    {
        ad::Tape::Scope scope(tape);
        const ad::Tensor loss = batch_loss(model.forward(A, xs), labels, asl);
        value = loss.item();
        if (std::isfinite(value)) tape.backward(loss);
    }
    if (!std::isfinite(value)) return value;
    opt.step(model.params());
    return value;
}

/// Micro-F1 of rho ≥ threshold against the labels over a whole set.
inline double evaluate_f1(const BeamformNet& model, const ComplexMatrix& A, const std::vector<Scenario>& data, double threshold,
                          std::size_t batch = 32) {
    F1Counts counts;
    for (std::size_t first = 0; first < data.size(); first += batch) {
        const std::size_t n = std::min(batch, data.size() - first);
        std::vector<const ComplexMatrix*> xs;
        for (std::size_t k = 0; k < n; ++k) xs.push_back(&data[first + k].X);
        const auto fb = model.forward(A, xs);
        for (std::size_t k = 0; k < n; ++k) counts.add(fb.rho[k].value(), data[first + k].label_vector(model.config().R), threshold);
    }
    return counts.f1();
}

/// Mini-batch Adam with a seeded shuffle per epoch, validation micro-F1 per
/// epoch and early stopping once `patience` epochs pass without a strictly
/// better F1. Returns the best-validation parameters.
inline TrainResult train(const ModelConfig& cfg, const ComplexMatrix& A, const std::vector<Scenario>& train_set,
                         const std::vector<Scenario>& val_set, const TrainConfig& tc,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    BeamformNet model(cfg);
    const ModelConfig& mc = model.config();
    detail::check_dataset(mc, train_set, "training");
    detail::check_dataset(mc, val_set, "validation");
    if (train_set.empty()) throw validation_error("training set is empty");
    if (tc.batch == 0) throw validation_error("batch size must be positive");
    if (tc.epochs == 0) throw validation_error("epochs must be positive");

    ad::Adam opt({tc.lr, 0.9, 0.999, 1e-8});
    TrainResult res{clone(model), {}, 0, -1.0};
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(stream_seed(tc.seed, epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_acc = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += tc.batch, ++batches) {
            std::vector<const Scenario*> batch;
            for (std::size_t k = first; k < std::min(first + tc.batch, order.size()); ++k) batch.push_back(&train_set[order[k]]);
            const double loss = train_step(model, opt, A, batch, tc.asl);
            if (!std::isfinite(loss)) {
                throw training_error("non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
            }
            loss_acc += loss;
        }
        EpochRecord rec{epoch, loss_acc / static_cast<double>(batches),
                        val_set.empty() ? 0.0 : evaluate_f1(model, A, val_set, tc.threshold, tc.batch)};
        res.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.val_f1 > res.best_val_f1) {
            res.best_val_f1 = rec.val_f1;
            res.best_epoch = epoch;
            res.model.params().assign_from(model.params());
        }
        if (epoch - res.best_epoch >= tc.patience) break;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Inference

/// Repeats the snapshots cyclically until there are `T` of them.
inline ComplexMatrix cyclic_pad(const ComplexMatrix& X, std::size_t T) {
    if (X.cols() == 0) throw validation_error("cannot pad an input without snapshots");
    ComplexMatrix out(X.rows(), T);
    for (std::size_t j = 0; j < X.rows(); ++j)
        for (std::size_t t = 0; t < T; ++t) out.set(j, t, X(j, t % X.cols()));
    return out;
}

struct Inference {
    NetOutput output;
    std::vector<Peak> peaks;
};

inline Inference infer(const BeamformNet& model, const ComplexMatrix& A, const ComplexMatrix& X, const AngleGrid& grid,
                       double threshold = 0.5) {
    const std::size_t T = model.config().T_train;
    if (X.cols() > T) {
        throw padding_required_error("input has " + std::to_string(X.cols()) + " snapshots, more than T_train=" + std::to_string(T) +
                                     "; truncate the input or retrain with a longer T_train");
    }
    Inference inf;
    inf.output = X.cols() == T ? model.run(A, X) : model.run(A, cyclic_pad(X, T));
    inf.peaks = peak_search(inf.output.spectrum, grid, threshold);
    return inf;
}

inline std::vector<Peak> infer_doa(const BeamformNet& model, const ComplexMatrix& A, const ComplexMatrix& X, const AngleGrid& grid,
                                   double threshold = 0.5) {
    return infer(model, A, X, grid, threshold).peaks;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kConfigEntryName = "__config__";

inline std::vector<ad::CheckpointEntry> checkpoint_entries(const BeamformNet& model) {
    auto entries = ad::to_entries(model.params());
    entries.push_back(ad::text_entry(kConfigEntryName, to_json(model.config()).dump()));
    return entries;
}

inline void save_model(const std::filesystem::path& path, const BeamformNet& model) {
    ad::save_checkpoint(path, checkpoint_entries(model));
}

inline BeamformNet model_from_entries(const std::vector<ad::CheckpointEntry>& entries) {
    const auto it = std::find_if(entries.begin(), entries.end(), [](const auto& e) { return e.name == kConfigEntryName; });
    if (it == entries.end()) throw validation_error("checkpoint has no embedded model config");
    ModelConfig cfg;
    try {
        cfg = model_config_from_json(nlohmann::json::parse(ad::entry_text(*it)));
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("checkpoint model config is malformed: ") + e.what());
    }
    BeamformNet model(cfg);
    ad::load_into(model.params(), entries);
    if (!model.params().all_finite()) throw validation_error("checkpoint holds non-finite parameters");
    return model;
}

inline BeamformNet load_model(const std::filesystem::path& path) { return model_from_entries(ad::load_checkpoint(path)); }

// ---------------------------------------------------------------------------
// Source-count estimator: MLP over the spectrum, classes K = 1..K_max.

struct EstimatorConfig {
    std::size_t R = 181;
    std::size_t K_max = 8;
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 64;
    std::uint64_t seed = 11;
};

/// Spectrum scaled by its maximum so inputs from any method share [0, 1].
inline std::vector<double> normalized_spectrum(const std::vector<double>& P) {
    const double top = P.empty() ? 0.0 : *std::max_element(P.begin(), P.end());
    std::vector<double> out(P);
    if (top > 0.0)
        for (auto& v : out) v /= top;
    return out;
}

class SourceCountEstimator {
public:
    explicit SourceCountEstimator(const EstimatorConfig& cfg) : cfg_(cfg) {
        if (cfg.K_max < 1 || cfg.R < 1 || cfg.hidden1 < 1 || cfg.hidden2 < 1) throw validation_error("estimator widths must be positive");
        Rng rng(cfg.seed);
        W1_ = store_.add_weight("est.W1", cfg.R, cfg.hidden1, rng);
        b1_ = store_.add_zeros("est.b1", 1, cfg.hidden1);
        W2_ = store_.add_weight("est.W2", cfg.hidden1, cfg.hidden2, rng);
        b2_ = store_.add_zeros("est.b2", 1, cfg.hidden2);
        W3_ = store_.add_weight("est.W3", cfg.hidden2, cfg.K_max, rng);
        b3_ = store_.add_zeros("est.b3", 1, cfg.K_max);
    }

    SourceCountEstimator(const SourceCountEstimator&) = delete;
    SourceCountEstimator& operator=(const SourceCountEstimator&) = delete;
    SourceCountEstimator(SourceCountEstimator&&) = default;

    const EstimatorConfig& config() const noexcept { return cfg_; }
    ad::ParamStore& params() noexcept { return store_; }

    /// batch×K_max logits for batch×R normalized spectra.
    ad::Tensor logits(const ad::Tensor& x) const {
        using namespace ad;
        if (x.cols() != cfg_.R) throw shape_error("estimator: spectrum width " + std::to_string(x.cols()) + ", expected R=" + std::to_string(cfg_.R));
        const Tensor h1 = relu(linear(x, W1_, b1_));
        const Tensor h2 = relu(linear(h1, W2_, b2_));
        return linear(h2, W3_, b3_);
    }

    /// Estimated K in 1..K_max; equal logits resolve to the smallest K.
    std::size_t estimate_k(const SpatialSpectrum& spec) const {
        if (spec.size() != cfg_.R) {
            throw shape_error("estimate_k: spectrum length " + std::to_string(spec.size()) + ", expected R=" + std::to_string(cfg_.R));
        }
        const ad::Tensor z = logits(ad::Tensor::constant(1, cfg_.R, normalized_spectrum(spec.P)));
        const auto& v = z.value();
        return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()) + 1;
    }

private:
    EstimatorConfig cfg_;
    ad::ParamStore store_;
    ad::Tensor W1_, b1_, W2_, b2_, W3_, b3_;
};

struct EstimatorTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 11;
};

/// Softmax cross-entropy training on (spectrum, K) pairs; returns per-epoch mean loss.
inline std::vector<double> train_estimator(SourceCountEstimator& est, const std::vector<SpatialSpectrum>& spectra,
                                           const std::vector<std::size_t>& ks, const EstimatorTrainConfig& tc) {
    using namespace ad;
    const auto& cfg = est.config();
    if (spectra.size() != ks.size()) throw shape_error("estimator: spectra and K lists differ in length");
    if (spectra.empty()) throw validation_error("estimator: empty training set");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1 || ks[i] > cfg.K_max) throw validation_error("estimator: K outside 1..K_max at sample " + std::to_string(i));
        if (spectra[i].size() != cfg.R) throw shape_error("estimator: spectrum length differs from R at sample " + std::to_string(i));
    }
    Adam opt({tc.lr, 0.9, 0.999, 1e-8});
    std::vector<double> history;
    std::vector<std::size_t> order(spectra.size());
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(stream_seed(tc.seed, epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        double acc = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += tc.batch, ++batches) {
            const std::size_t n = std::min(tc.batch, order.size() - first);
            std::vector<double> x, onehot(n * cfg.K_max, 0.0);
            for (std::size_t k = 0; k < n; ++k) {
                const auto row = normalized_spectrum(spectra[order[first + k]].P);
                x.insert(x.end(), row.begin(), row.end());
                onehot[k * cfg.K_max + ks[order[first + k]] - 1] = 1.0;
            }
            est.params().zero_grad();
            Tape tape;
            Tape::Scope scope(tape);
            const Tensor logp = log(softmax_rows(est.logits(Tensor::constant(n, cfg.R, std::move(x)))));
            const Tensor loss = scalar_scale(sum(mul(Tensor::constant(n, cfg.K_max, std::move(onehot)), logp)), -1.0 / static_cast<double>(n));
            if (!std::isfinite(loss.item())) throw training_error("estimator: non-finite loss in epoch " + std::to_string(epoch));
            tape.backward(loss);
            opt.step(est.params());
            acc += loss.item();
        }
        history.push_back(acc / static_cast<double>(batches));
    }
    return history;
}

/// Peak-count alternative: the number of peaks above threshold, clamped to 1..K_max.
inline std::size_t estimate_k_peaks(const SpatialSpectrum& spec, const AngleGrid& grid, double threshold, std::size_t K_max) {
    const std::size_t n = peak_search(spec, grid, threshold).size();
    return std::clamp<std::size_t>(n, 1, K_max);
}

}  // namespace bfn
