#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bfn/array_model.hpp"
#include "bfn/beamformnet.hpp"
#include "bfn/binary_io.hpp"
#include "bfn/classical.hpp"
#include "bfn/error.hpp"
#include "bfn/metrics.hpp"
#include "bfn/parallel.hpp"
#include "bfn/scenario.hpp"

namespace bfn::cli {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration

/// Every accepted key with its default. A null default marks an optional leaf.
inline json default_config() {
    return json::parse(R"({
      "array": {"M": null, "spacing": null, "positions": null, "f": 1000.0, "c": 340.0},
      "grid": {"delta_deg": 1.0},
      "data": {
        "K": null, "K_set": [1, 2], "T": 50, "snr_db": null, "snr_set": [10.0],
        "coherent": false, "rho_err": 0.0, "on_grid": false, "separation_deg": null,
        "samples": {"train": 2000, "val": 500, "test": 500},
        "seed": 7
      },
      "model": {"E": 32, "T_train": null, "enc_hidden": 0, "align_hidden": 0, "filt_hidden": 0, "proj_hidden": 0, "seed": 7},
      "train": {"batch": 32, "lr": 0.001, "epochs": 30, "patience": 20},
      "eval": {"methods": ["beamformnet", "cbf", "mvdr", "music"], "threshold": 0.5, "mvdr_loading": 1e-6, "k_source": "true"}
    })");
}

namespace detail {

inline void merge_into(json& base, const json& user, const json& schema, const std::string& path) {
    if (!user.is_object()) throw config_error((path.empty() ? std::string("config") : path) + " must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!schema.contains(it.key())) throw config_error("unknown key " + key);
        const json& sub = schema.at(it.key());
        if (sub.is_object()) merge_into(base[it.key()], it.value(), sub, key);
        else base[it.key()] = it.value();
    }
}

template <typename T>
T leaf(const json& doc, const std::string& path) {
    const json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        node = &node->at(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        return node->get<T>();
    } catch (const json::exception&) {
        throw config_error(path + " has the wrong type: " + node->dump());
    }
}

inline bool is_null(const json& doc, const std::string& path) {
    const auto dot = path.find('.');
    return doc.at(path.substr(0, dot)).at(path.substr(dot + 1)).is_null();
}

}  // namespace detail

enum class Split : std::uint64_t { train = 0, val = 1, test = 2 };

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw config_error("unknown split '" + s + "' (train, val, test)");
}

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct EvalSettings {
    std::vector<std::string> methods;
    double threshold = 0.5;
    double mvdr_loading = kDefaultMvdrLoading;
    std::string k_source = "true";  // MUSIC model order: "true" or "peaks"
};

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"beamformnet", "cbf", "mvdr", "music"};
    return m;
}

inline void check_method(const std::string& m) {
    const auto& known = known_methods();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
        throw config_error("unknown method '" + m + "' (beamformnet, cbf, mvdr, music)");
    }
}

/// Merged and validated configuration document.
class RunConfig {
public:
    RunConfig() : RunConfig(json::object()) {}

    explicit RunConfig(const json& user) : doc_(default_config()) {
        detail::merge_into(doc_, user, default_config(), "");
        validate();
    }

    static RunConfig from_file(const std::filesystem::path& path) {
        const auto bytes = io::read_file(path);
        json user;
        try {
            user = json::parse(bytes.begin(), bytes.end());
        } catch (const json::parse_error& e) {
            throw config_error("cannot parse " + path.string() + ": " + e.what());
        }
        return RunConfig(user);
    }

    /// Replaces one leaf addressed by a dotted path. The value is parsed as
    /// JSON, falling back to a plain string.
    void set(const std::string& path, const std::string& raw) {
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }
        json schema = default_config();
        json* node = &doc_;
        const json* sch = &schema;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot - start);
            if (!sch->is_object() || !sch->contains(key)) throw config_error("unknown key " + path);
            sch = &sch->at(key);
            node = &(*node)[key];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        if (sch->is_object()) throw config_error(path + " is a section, not a leaf");
        *node = std::move(value);
        validate();
    }

    void apply_overrides(const std::vector<std::string>& assignments) {
        for (const auto& a : assignments) {
            const auto eq = a.find('=');
            if (eq == std::string::npos || eq == 0) throw config_error("override '" + a + "' must look like key.path=value");
            set(a.substr(0, eq), a.substr(eq + 1));
        }
    }

    const json& doc() const noexcept { return doc_; }

    WaveConfig wave() const { return {detail::leaf<double>(doc_, "array.f"), detail::leaf<double>(doc_, "array.c")}; }

    ArrayGeometry geometry() const {
        const WaveConfig w = wave();
        if (!detail::is_null(doc_, "array.positions")) {
            const auto rows = detail::leaf<std::vector<std::vector<double>>>(doc_, "array.positions");
            std::vector<Position> pos;
            for (const auto& r : rows) {
                if (r.size() != 3) throw config_error("array.positions entries must be [x, y, z]");
                pos.push_back({r[0], r[1], r[2]});
            }
            if (!detail::is_null(doc_, "array.M") && detail::leaf<std::size_t>(doc_, "array.M") != pos.size()) {
                throw config_error("array.M disagrees with the number of array.positions");
            }
            return ArrayGeometry(std::move(pos));
        }
        const std::size_t M = detail::is_null(doc_, "array.M") ? 8 : detail::leaf<std::size_t>(doc_, "array.M");
        const double spacing = detail::is_null(doc_, "array.spacing") ? w.lambda() / 2.0 : detail::leaf<double>(doc_, "array.spacing");
        return ArrayGeometry::ula(M, spacing);
    }

    ScenarioConfig scenario() const {
        ScenarioConfig sc;
        sc.wave = wave();
        sc.geometry = geometry();
        sc.delta_deg = detail::leaf<double>(doc_, "grid.delta_deg");
        sc.T = detail::leaf<std::size_t>(doc_, "data.T");
        sc.k_set = detail::is_null(doc_, "data.K") ? detail::leaf<std::vector<std::size_t>>(doc_, "data.K_set")
                                                   : std::vector<std::size_t>{detail::leaf<std::size_t>(doc_, "data.K")};
        sc.snr_set_db = detail::is_null(doc_, "data.snr_db") ? detail::leaf<std::vector<double>>(doc_, "data.snr_set")
                                                             : std::vector<double>{detail::leaf<double>(doc_, "data.snr_db")};
        sc.coherent = detail::leaf<bool>(doc_, "data.coherent");
        sc.rho_err = detail::leaf<double>(doc_, "data.rho_err");
        sc.on_grid = detail::leaf<bool>(doc_, "data.on_grid");
        if (!detail::is_null(doc_, "data.separation_deg")) sc.separation_deg = detail::leaf<double>(doc_, "data.separation_deg");
        return sc;
    }

    std::uint64_t seed() const { return detail::leaf<std::uint64_t>(doc_, "data.seed"); }

    std::size_t samples(Split s) const { return detail::leaf<std::size_t>(doc_, std::string("data.samples.") + split_name(s)); }

    /// Seed rooting the sample stream of one split.
    std::uint64_t split_seed(Split s) const { return stream_seed(seed(), static_cast<std::uint64_t>(s)); }

    ModelConfig model() const {
        ModelConfig m;
        m.M = geometry().size();
        m.R = AngleGrid(detail::leaf<double>(doc_, "grid.delta_deg")).size();
        m.T_train = detail::is_null(doc_, "model.T_train") ? detail::leaf<std::size_t>(doc_, "data.T")
                                                           : detail::leaf<std::size_t>(doc_, "model.T_train");
        m.E = detail::leaf<std::size_t>(doc_, "model.E");
        m.enc_hidden = detail::leaf<std::size_t>(doc_, "model.enc_hidden");
        m.align_hidden = detail::leaf<std::size_t>(doc_, "model.align_hidden");
        m.filt_hidden = detail::leaf<std::size_t>(doc_, "model.filt_hidden");
        m.proj_hidden = detail::leaf<std::size_t>(doc_, "model.proj_hidden");
        m.seed = detail::leaf<std::uint64_t>(doc_, "model.seed");
        return m.resolved();
    }

    TrainConfig train() const {
        TrainConfig t;
        t.batch = detail::leaf<std::size_t>(doc_, "train.batch");
        t.lr = detail::leaf<double>(doc_, "train.lr");
        t.epochs = detail::leaf<std::size_t>(doc_, "train.epochs");
        t.patience = detail::leaf<std::size_t>(doc_, "train.patience");
        t.threshold = detail::leaf<double>(doc_, "eval.threshold");
        t.seed = seed();
        return t;
    }

    EvalSettings eval() const {
        EvalSettings e;
        e.methods = detail::leaf<std::vector<std::string>>(doc_, "eval.methods");
        e.threshold = detail::leaf<double>(doc_, "eval.threshold");
        e.mvdr_loading = detail::leaf<double>(doc_, "eval.mvdr_loading");
        e.k_source = detail::leaf<std::string>(doc_, "eval.k_source");
        return e;
    }

private:
    void validate() const {
        try {
            const ScenarioConfig sc = scenario();
            (void)sc.grid();
            if (sc.T == 0) throw config_error("data.T must be positive");
            for (auto k : sc.k_set)
                if (k == 0 || k >= sc.M()) throw config_error("data K values must lie in 1..M-1");
            if (sc.k_set.empty()) throw config_error("data.K_set is empty");
            if (sc.snr_set_db.empty()) throw config_error("data.snr_set is empty");
            if (sc.rho_err < 0.0) throw config_error("data.rho_err must be non-negative");
            if (!(sc.wave.f > 0.0) || !(sc.wave.c > 0.0)) throw config_error("array.f and array.c must be positive");
            (void)seed();
            for (auto s : {Split::train, Split::val, Split::test}) (void)samples(s);
            (void)model();
            const TrainConfig t = train();
            if (t.batch == 0 || t.epochs == 0) throw config_error("train.batch and train.epochs must be positive");
            if (!(t.lr > 0.0)) throw config_error("train.lr must be positive");
            const EvalSettings e = eval();
            for (const auto& m : e.methods) check_method(m);
            if (e.k_source != "true" && e.k_source != "peaks") throw config_error("eval.k_source must be \"true\" or \"peaks\"");
            if (!(e.mvdr_loading >= 0.0)) throw config_error("eval.mvdr_loading must be non-negative");
        } catch (const config_error&) {
            throw;
        } catch (const error& e) {
            throw config_error(e.what());
        } catch (const json::exception& e) {
            throw config_error(e.what());
        }
    }

    json doc_;
};

// ---------------------------------------------------------------------------
// CSV helpers

/// Shortest text that reads back to the same double.
inline std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string num(std::uint64_t v) { return std::to_string(v); }

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) { row(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw validation_error("csv row has " + std::to_string(cells.size()) + " cells, header " + std::to_string(width_));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    const std::string& text() const noexcept { return text_; }
    void write(const std::filesystem::path& path) const { io::write_text_atomic(path, text_); }

private:
    std::size_t width_;
    std::string text_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalContext {
    ArrayGeometry geometry;
    WaveConfig wave;
    AngleGrid grid;
    ComplexMatrix A;
    EvalSettings settings;
    double rho_err = 0.0;
    const BeamformNet* model = nullptr;

    EvalContext(ArrayGeometry g, WaveConfig w, AngleGrid gr, EvalSettings s, double rho, const BeamformNet* m)
        : geometry(std::move(g)), wave(w), grid(std::move(gr)), A(manifold(geometry, wave, grid)), settings(std::move(s)), rho_err(rho), model(m) {
        if (model) {
            const auto& mc = model->config();
            if (mc.M != geometry.size() || mc.R != grid.size()) {
                throw shape_error("model expects M=" + std::to_string(mc.M) + ", R=" + std::to_string(mc.R) + " but the data has M=" +
                                  std::to_string(geometry.size()) + ", R=" + std::to_string(grid.size()));
            }
        }
    }
};

inline constexpr std::size_t kInferBatch = 32;

/// Spectra of one method over a sample list, plus the model order MUSIC used.
inline std::vector<SpatialSpectrum> method_spectra(const std::string& method, const std::vector<Scenario>& samples,
                                                    const EvalContext& ctx, bool parallel, std::vector<std::size_t>* music_k = nullptr) {
    check_method(method);
    const std::size_t n = samples.size();
    std::vector<SpatialSpectrum> out(n);
    auto each = [&](std::size_t count, auto&& body) {
        if (parallel) parallel_for(count, body);
        else
            for (std::size_t i = 0; i < count; ++i) body(i);
    };
    if (method == "cbf") {
        const SpatialFilter f = cbf_filter(ctx.A);
        each(n, [&](std::size_t i) { out[i] = spectrum_from_filter(f, samples[i].X); });
    } else if (method == "mvdr") {
        each(n, [&](std::size_t i) { out[i] = spectrum_from_filter(mvdr_filter(samples[i].X, ctx.A, ctx.settings.mvdr_loading), samples[i].X); });
    } else if (method == "music") {
        std::vector<std::size_t> ks(n);
        const SpatialFilter cbf = cbf_filter(ctx.A);
        each(n, [&](std::size_t i) {
            std::size_t k = samples[i].K;
            if (ctx.settings.k_source == "peaks") {
                k = estimate_k_peaks(spectrum_from_filter(cbf, samples[i].X), ctx.grid, ctx.settings.threshold, ctx.geometry.size() - 1);
            }
            ks[i] = k;
            out[i] = music_spectrum(samples[i].X, ctx.A, k);
        });
        if (music_k) *music_k = std::move(ks);
    } else {
        if (!ctx.model) throw config_error("method beamformnet needs a trained model (--model)");
        const std::size_t T = ctx.model->config().T_train;
        const std::size_t chunks = (n + kInferBatch - 1) / kInferBatch;
        each(chunks, [&](std::size_t c) {
            const std::size_t first = c * kInferBatch, last = std::min(n, first + kInferBatch);
            std::vector<ComplexMatrix> padded;
            padded.reserve(last - first);
            for (std::size_t i = first; i < last; ++i) {
                const auto& X = samples[i].X;
                if (X.cols() > T) {
                    throw padding_required_error("sample " + std::to_string(i) + " has " + std::to_string(X.cols()) +
                                                 " snapshots, more than T_train=" + std::to_string(T));
                }
                padded.push_back(X.cols() == T ? X : cyclic_pad(X, T));
            }
            std::vector<const ComplexMatrix*> xs;
            for (const auto& X : padded) xs.push_back(&X);
            const ForwardBatch fb = ctx.model->forward(ctx.A, xs);
            for (std::size_t i = first; i < last; ++i) out[i] = BeamformNet::to_output(fb, i - first).spectrum;
        });
    }
    return out;
}

struct Evaluation {
    std::vector<EvalRecord> records;  // one per sample, in sample order
    F1Counts counts;                  // pooled over all samples
};

inline Evaluation evaluate(const std::string& method, const std::vector<Scenario>& samples, const EvalContext& ctx,
                                        std::uint64_t base_seed, bool parallel) {
    std::vector<std::size_t> music_k;
    const auto spectra = method_spectra(method, samples, ctx, parallel, &music_k);
    Evaluation ev;
    ev.records.resize(samples.size());
    const double thr = ctx.settings.threshold;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const auto peaks = peak_search(spectra[i], ctx.grid, thr);
        EvalRecord& r = ev.records[i];
        r.method = method;
        r.K = s.K;
        r.T = s.T;
        r.snr_db = s.snr_db;
        r.rho_err = ctx.rho_err;
        r.coherent = s.coherent;
        r.seed = stream_seed(base_seed, i);
        r.rmspe_rad = rmspe(s.angles, align(peaks, s.K, spectra[i], ctx.grid));
        r.k_est = method == "music" ? music_k[i] : peaks.size();
        r.k_true = s.K;
        const auto labels = s.label_vector(ctx.grid.size());
        r.f1 = micro_f1(spectra[i].rho, labels, thr);
        ev.counts.add(spectra[i].rho, labels, thr);
    }
    return ev;
}

inline const std::vector<std::string>& eval_header() {
    static const std::vector<std::string> h{"method", "K", "T", "snr_db", "rho_err", "coherent", "seed", "rmspe_rad", "k_est", "k_true", "f1"};
    return h;
}

inline void append_records(Csv& csv, const std::vector<EvalRecord>& recs) {
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        csv.row({r.method, std::to_string(r.K), std::to_string(r.T), num(r.snr_db), num(r.rho_err), r.coherent ? "1" : "0",
                 std::to_string(r.seed), num(r.rmspe_rad), std::to_string(r.k_est), std::to_string(r.k_true), num(r.f1)});
    }
}

struct Summary {
    double rmspe_rad = 0.0;  // mean of per-sample RMSPE
    double f1 = 0.0;         // micro-F1 pooled over samples
    double k_accuracy = 0.0;
};

inline Summary summarize(const Evaluation& ev) {
    const auto& recs = ev.records;
    if (recs.empty()) throw validation_error("nothing to summarize");
    Summary s;
    for (const auto& r : recs) s.rmspe_rad += r.rmspe_rad;
    s.rmspe_rad /= static_cast<double>(recs.size());
    s.f1 = ev.counts.f1();
    s.k_accuracy = k_accuracy(recs);
    return s;
}

/// Draws the samples of one sweep point or split. Fails early on configs the
/// simulator would reject.
inline std::vector<Scenario> simulate(const ScenarioConfig& sc, std::uint64_t base_seed, std::size_t count) {
    if (count == 0) throw config_error("sample count must be positive");
    return generate_scenarios(sc, base_seed, count);
}

// ---------------------------------------------------------------------------
// Oracle demo

struct OracleDemo {
    std::vector<std::uint32_t> labels;
    std::size_t noise_rank = 0;
    OracleResiduals residuals;
};

/// K on-grid unit sources, rank-r noise N = Q·G, oracle filter from the noise
/// subspace of N.
inline OracleDemo run_oracle_demo(std::size_t M, std::size_t K, std::size_t r, std::size_t T, double delta_deg, std::uint64_t seed) {
    if (K == 0) throw validation_error("oracle needs K >= 1");
    if (T == 0) throw validation_error("oracle needs T >= 1");
    const WaveConfig wave{};
    const AngleGrid grid(delta_deg);
    if (K > grid.size()) throw validation_error("K exceeds the grid size");
    const auto geom = ArrayGeometry::half_wavelength_ula(M, wave);
    if (K + r > M) {
        throw infeasible_error("oracle filter needs K + r <= M (K=" + std::to_string(K) + ", r=" + std::to_string(r) + ", M=" + std::to_string(M) + ")");
    }
    Rng rng(seed);
    std::vector<std::uint32_t> pool(grid.size());
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t k = 0; k < K; ++k) std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
    OracleDemo demo;
    demo.labels.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(K));
    std::sort(demo.labels.begin(), demo.labels.end());

    std::vector<double> angles;
    for (auto l : demo.labels) angles.push_back(grid[l]);
    const ComplexMatrix a_active = steering_matrix(geom, wave, angles);
    ComplexMatrix S(K, T), Q(M, r), G(r, T);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t) S.set(k, t, rng.complex_normal());
    for (std::size_t j = 0; j < M; ++j)
        for (std::size_t k = 0; k < r; ++k) Q.set(j, k, rng.complex_normal());
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t t = 0; t < T; ++t) G.set(k, t, rng.complex_normal(0.1));
    const ComplexMatrix N = r == 0 ? ComplexMatrix(M, T) : matmul(Q, G);
    const ComplexMatrix basis = r == 0 ? ComplexMatrix() : noise_subspace_basis(N);
    demo.noise_rank = basis.empty() ? 0 : basis.cols();
    demo.residuals = oracle_residuals(oracle_filter(a_active, basis), a_active, S, N);
    return demo;
}

// ---------------------------------------------------------------------------
// Commands

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? RunConfig() : RunConfig::from_file(path);
    cfg.apply_overrides(overrides);
    return cfg;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw config_error("empty entry in list '" + s + "'");
        out.push_back(item);
    }
    if (out.empty()) throw config_error("empty list");
    return out;
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw config_error("'" + s + "' is not a number");
    return v;
}

inline std::vector<std::string> resolve_methods(const std::vector<std::string>& flags, const RunConfig& cfg) {
    auto m = flags.empty() ? cfg.eval().methods : flags;
    for (const auto& x : m) check_method(x);
    if (m.empty()) throw config_error("no methods requested");
    return m;
}

inline bool needs_model(const std::vector<std::string>& methods) {
    return std::find(methods.begin(), methods.end(), "beamformnet") != methods.end();
}

inline std::optional<BeamformNet> maybe_model(const std::string& path, const std::vector<std::string>& methods) {
    if (path.empty()) {
        if (needs_model(methods)) throw config_error("method beamformnet needs --model");
        return std::nullopt;
    }
    return load_model(path);
}

inline int cmd_simulate(const RunConfig& cfg, const std::string& split_str, std::optional<std::size_t> count, const std::string& out_path,
                        Streams io) {
    const Split split = parse_split(split_str);
    const ScenarioConfig sc = cfg.scenario();
    const std::size_t n = count.value_or(cfg.samples(split));
    const std::uint64_t seed = cfg.split_seed(split);
    const auto samples = simulate(sc, seed, n);
    write_dataset(out_path, make_header(sc, seed, n), samples);
    io.out << "simulate: wrote " << n << " " << split_name(split) << " samples to " << out_path << "\n";
    return 0;
}

inline std::vector<Scenario> load_or_simulate(const std::string& path, const RunConfig& cfg, Split split) {
    if (!path.empty()) return read_dataset(path).samples;
    return simulate(cfg.scenario(), cfg.split_seed(split), cfg.samples(split));
}

inline int cmd_train(const RunConfig& cfg, const std::string& train_path, const std::string& val_path, const std::string& out_path,
                     const std::string& history_path, Streams io) {
    const ModelConfig mc = cfg.model();
    const ScenarioConfig sc = cfg.scenario();
    const auto train_set = load_or_simulate(train_path, cfg, Split::train);
    const auto val_set = load_or_simulate(val_path, cfg, Split::val);
    const ComplexMatrix A = manifold(sc.geometry, sc.wave, sc.grid());
    const TrainResult res = train(mc, A, train_set, val_set, cfg.train(), [&](const EpochRecord& r) {
        io.out << "epoch " << r.epoch << " train_loss " << num(r.train_loss) << " val_f1 " << num(r.val_f1) << "\n" << std::flush;
    });
    Csv hist({"epoch", "train_loss", "val_f1"});
    for (const auto& r : res.history) hist.row({std::to_string(r.epoch), num(r.train_loss), num(r.val_f1)});
    save_model(out_path, res.model);
    if (!history_path.empty()) hist.write(history_path);
    io.out << "train: best epoch " << res.best_epoch << " val_f1 " << num(res.best_val_f1) << ", checkpoint " << out_path << "\n";
    return 0;
}

/// Geometry for a dataset: the configured one when a config is given, else
/// the half-wavelength ULA implied by the header.
inline ArrayGeometry dataset_geometry(const DatasetHeader& h, const RunConfig& cfg, bool have_config) {
    const ArrayGeometry g = have_config ? cfg.geometry() : ArrayGeometry::half_wavelength_ula(h.M, WaveConfig{h.f_hz, h.c_mps});
    if (g.size() != h.M) throw shape_error("dataset has M=" + std::to_string(h.M) + " but the config array has " + std::to_string(g.size()));
    return g;
}

inline int cmd_eval(const RunConfig& cfg, bool have_config, const std::string& dataset_path, const std::vector<std::string>& method_flags,
                    const std::string& model_path, const std::string& out_path, Streams io) {
    const auto methods = resolve_methods(method_flags, cfg);
    const auto model = maybe_model(model_path, methods);
    const Dataset ds = read_dataset(dataset_path);
    const EvalContext ctx(dataset_geometry(ds.header, cfg, have_config), WaveConfig{ds.header.f_hz, ds.header.c_mps},
                          AngleGrid::radians(ds.header.delta_rad), cfg.eval(), have_config ? cfg.scenario().rho_err : 0.0,
                          model ? &*model : nullptr);
    Csv csv(eval_header());
    for (const auto& m : methods) {
        const auto ev = evaluate(m, ds.samples, ctx, ds.header.base_seed, true);
        append_records(csv, ev.records);
        const Summary s = summarize(ev);
        io.out << "eval " << m << ": rmspe_rad " << num(s.rmspe_rad) << " f1 " << num(s.f1) << " k_accuracy " << num(s.k_accuracy) << "\n";
    }
    csv.write(out_path);
    return 0;
}

inline const std::vector<std::string>& sweep_params() {
    static const std::vector<std::string> p{"K", "T", "snr_db", "M", "delta_theta", "rho_err"};
    return p;
}

/// Config of one sweep point.
inline RunConfig sweep_point(RunConfig cfg, const std::string& param, const std::string& value) {
    const double v = parse_double(value);
    if (param == "K") cfg.set("data.K", value);
    else if (param == "T") cfg.set("data.T", value);
    else if (param == "snr_db") cfg.set("data.snr_db", num(v));
    else if (param == "M") cfg.set("array.M", value);
    else if (param == "delta_theta") cfg.set("data.separation_deg", num(v));
    else if (param == "rho_err") cfg.set("data.rho_err", num(v));
    else throw config_error("unknown sweep parameter '" + param + "' (K, T, snr_db, M, delta_theta, rho_err)");
    return cfg;
}

inline int cmd_sweep(const RunConfig& cfg, const std::string& param, const std::string& values_str, const std::vector<std::string>& method_flags,
                     const std::string& model_path, std::optional<std::size_t> samples_flag, const std::string& out_path, Streams io) {
    const auto methods = resolve_methods(method_flags, cfg);
    const auto model = maybe_model(model_path, methods);
    const auto values = split_list(values_str);
    std::vector<RunConfig> points;
    for (const auto& v : values) points.push_back(sweep_point(cfg, param, v));
    const std::size_t n = samples_flag.value_or(cfg.samples(Split::test));

    std::vector<std::vector<std::vector<std::string>>> rows(points.size());
    parallel_for(points.size(), [&](std::size_t p) {
        const RunConfig& pc = points[p];
        const ScenarioConfig sc = pc.scenario();
        const std::uint64_t seed = stream_seed(pc.split_seed(Split::test), p);
        const auto samples = simulate(sc, seed, n);
        const EvalContext ctx(sc.geometry, sc.wave, sc.grid(), pc.eval(), sc.rho_err, model ? &*model : nullptr);
        std::string ks;
        for (auto k : sc.k_set) ks += (ks.empty() ? "" : ";") + std::to_string(k);
        for (const auto& m : methods) {
            const Summary s = summarize(evaluate(m, samples, ctx, seed, false));
            rows[p].push_back({m, param, values[p], ks, std::to_string(sc.T), sc.snr_set_db.size() == 1 ? num(sc.snr_set_db[0]) : std::string(),
                               std::to_string(sc.M()), sc.separation_deg ? num(*sc.separation_deg) : "", num(sc.rho_err), std::to_string(seed),
                               std::to_string(n), num(s.rmspe_rad), num(s.f1), num(s.k_accuracy)});
        }
    });
    Csv csv({"method", "param", "value", "K", "T", "snr_db", "M", "delta_theta_deg", "rho_err", "seed", "n", "rmspe_rad", "f1", "k_accuracy"});
    for (const auto& point : rows)
        for (const auto& r : point) {
            csv.row(r);
            io.out << "sweep " << r[0] << " " << param << "=" << r[2] << ": rmspe_rad " << r[11] << "\n";
        }
    csv.write(out_path);
    return 0;
}

inline int cmd_spectrum(const RunConfig& cfg, bool have_config, const std::string& dataset_path, std::size_t index,
                        const std::vector<std::string>& method_flags, const std::string& model_path, const std::string& out_path,
                        const std::string& weights_path, Streams io) {
    const auto methods = resolve_methods(method_flags, cfg);
    const auto model = maybe_model(model_path, methods);
    std::vector<Scenario> one;
    ArrayGeometry geom;
    WaveConfig wave;
    AngleGrid grid;
    if (!dataset_path.empty()) {
        Dataset ds = read_dataset(dataset_path);
        if (index >= ds.samples.size()) throw validation_error("sample index " + std::to_string(index) + " outside dataset of " + std::to_string(ds.samples.size()));
        one.push_back(std::move(ds.samples[index]));
        geom = dataset_geometry(ds.header, cfg, have_config);
        wave = {ds.header.f_hz, ds.header.c_mps};
        grid = AngleGrid::radians(ds.header.delta_rad);
    } else {
        const ScenarioConfig sc = cfg.scenario();
        one.push_back(sample_at(sc, cfg.split_seed(Split::test), index));
        geom = sc.geometry;
        wave = sc.wave;
        grid = sc.grid();
    }
    const EvalContext ctx(geom, wave, grid, cfg.eval(), cfg.scenario().rho_err, model ? &*model : nullptr);
    Csv csv({"method", "grid_deg", "P", "rho"});
    std::optional<Csv> weights;
    if (!weights_path.empty()) weights.emplace(std::vector<std::string>{"method", "row_deg", "col_deg", "w"});
    for (const auto& m : methods) {
        const auto spec = method_spectra(m, one, ctx, false).front();
        for (std::size_t i = 0; i < grid.size(); ++i) csv.row({m, num(grid.degrees_at(i)), num(spec.P[i]), num(spec.rho[i])});
        // MUSIC has no spatial filter, so it gets no weighting rows.
        if (weights && m != "music") {
            SpatialFilter f;
            if (m == "cbf") f = cbf_filter(ctx.A);
            else if (m == "mvdr") f = mvdr_filter(one[0].X, ctx.A, ctx.settings.mvdr_loading);
            else {
                const std::size_t T = ctx.model->config().T_train;
                f = ctx.model->run(ctx.A, one[0].X.cols() == T ? one[0].X : cyclic_pad(one[0].X, T)).filter;
            }
            const RealMatrix W = weighting_matrix(f, ctx.A);
            for (std::size_t i = 0; i < W.rows; ++i)
                for (std::size_t k = 0; k < W.cols; ++k) weights->row({m, num(grid.degrees_at(i)), num(grid.degrees_at(k)), num(W(i, k))});
        }
        io.out << "spectrum " << m << ": " << peak_search(spec, grid, ctx.settings.threshold).size() << " peaks\n";
    }
    if (weights) weights->write(weights_path);
    csv.write(out_path);
    return 0;
}

inline int cmd_oracle(std::size_t M, std::size_t K, std::size_t r, std::size_t T, double delta_deg, std::uint64_t seed, Streams io) {
    const OracleDemo d = run_oracle_demo(M, K, r, T, delta_deg, seed);
    io.out << "oracle M=" << M << " K=" << K << " r=" << d.noise_rank << " T=" << T << " seed=" << seed << "\n";
    io.out << "focus_residual " << num(d.residuals.focus) << "\n";
    io.out << "noise_residual " << num(d.residuals.noise) << "\n";
    return 0;
}

inline int cmd_estimate_k(const RunConfig& cfg, const std::string& method, const std::string& model_path, std::optional<std::size_t> train_n,
                          std::optional<std::size_t> test_n, std::size_t epochs, const std::string& out_path, Streams io) {
    check_method(method);
    if (method == "music") throw config_error("estimate-k needs a model-order-free spectrum (cbf, mvdr or beamformnet)");
    const auto model = maybe_model(model_path, {method});
    const ScenarioConfig sc = cfg.scenario();
    const auto train_set = simulate(sc, cfg.split_seed(Split::train), train_n.value_or(cfg.samples(Split::train)));
    const auto test_set = simulate(sc, cfg.split_seed(Split::test), test_n.value_or(cfg.samples(Split::test)));
    const EvalContext ctx(sc.geometry, sc.wave, sc.grid(), cfg.eval(), sc.rho_err, model ? &*model : nullptr);

    EstimatorConfig ec;
    ec.R = sc.grid().size();
    ec.K_max = *std::max_element(sc.k_set.begin(), sc.k_set.end());
    ec.seed = cfg.seed();
    SourceCountEstimator est(ec);
    EstimatorTrainConfig tc;
    tc.epochs = epochs;
    tc.seed = cfg.seed();
    std::vector<std::size_t> ks;
    for (const auto& s : train_set) ks.push_back(s.K);
    const auto history = train_estimator(est, method_spectra(method, train_set, ctx, true), ks, tc);

    const auto spectra = method_spectra(method, test_set, ctx, true);
    std::size_t hit_mlp = 0, hit_peaks = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        hit_mlp += est.estimate_k(spectra[i]) == test_set[i].K;
        hit_peaks += estimate_k_peaks(spectra[i], ctx.grid, ctx.settings.threshold, ec.K_max) == test_set[i].K;
    }
    const double n = static_cast<double>(test_set.size());
    Csv csv({"estimator", "method", "n", "accuracy", "final_train_loss"});
    csv.row({"mlp", method, std::to_string(test_set.size()), num(hit_mlp / n), num(history.back())});
    csv.row({"peaks", method, std::to_string(test_set.size()), num(hit_peaks / n), ""});
    csv.write(out_path);
    io.out << "estimate-k " << method << ": mlp accuracy " << num(hit_mlp / n) << ", peak-count accuracy " << num(hit_peaks / n) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Dispatch

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

/// Parses argv and runs one subcommand. Every failure prints a single
/// "error: <category>: <message>" line and returns nonzero.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"bfn: direction-of-arrival simulation, classical beamformers and BeamformNet"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override a config leaf, e.g. data.snr_db=0");
    };

    std::string out_path, split = "train", dataset, model_path, history, weights, param, values, method = "cbf";
    std::vector<std::string> methods;
    std::optional<std::size_t> count, samples, train_n, test_n;
    std::size_t index = 0, m = 8, k = 3, r_noise = 4, t = 50, epochs = 30;
    std::uint64_t seed = 1;
    double delta_deg = 1.0;
    std::string train_data, val_data;

    auto* sim = app.add_subcommand("simulate", "draw a dataset file");
    add_config(sim);
    sim->add_option("--split", split, "train, val or test");
    sim->add_option("--count", count, "number of samples (default: data.samples of the split)");
    sim->add_option("--out", out_path, "dataset path")->required();

    auto* tr = app.add_subcommand("train", "train BeamformNet");
    add_config(tr);
    tr->add_option("--train-data", train_data, "training dataset (default: simulate from the config)");
    tr->add_option("--val-data", val_data, "validation dataset (default: simulate from the config)");
    tr->add_option("--out", out_path, "checkpoint path")->required();
    tr->add_option("--history", history, "per-epoch history CSV");

    auto* ev = app.add_subcommand("eval", "score methods over a dataset");
    add_config(ev);
    ev->add_option("--dataset", dataset, "dataset path")->required()->check(CLI::ExistingFile);
    ev->add_option("--method", methods, "beamformnet, cbf, mvdr or music (repeatable)");
    ev->add_option("--model", model_path, "checkpoint for beamformnet");
    ev->add_option("--out", out_path, "EvalRecord CSV")->required();

    auto* sw = app.add_subcommand("sweep", "vary one parameter and score methods");
    add_config(sw);
    sw->add_option("--param", param, "K, T, snr_db, M, delta_theta or rho_err")->required();
    sw->add_option("--values", values, "comma-separated values")->required();
    sw->add_option("--method", methods, "methods (repeatable)");
    sw->add_option("--model", model_path, "checkpoint for beamformnet");
    sw->add_option("--samples", samples, "samples per point (default: data.samples.test)");
    sw->add_option("--out", out_path, "tidy CSV")->required();

    auto* sp = app.add_subcommand("spectrum", "export spectra of one sample");
    add_config(sp);
    sp->add_option("--dataset", dataset, "dataset path (default: simulate test sample --index)");
    sp->add_option("--index", index, "sample index");
    sp->add_option("--method", methods, "methods (repeatable)");
    sp->add_option("--model", model_path, "checkpoint for beamformnet");
    sp->add_option("--out", out_path, "spectrum CSV")->required();
    sp->add_option("--weights-out", weights, "weighting-matrix CSV");

    auto* orc = app.add_subcommand("oracle", "optimal spatial filter demo");
    orc->add_option("--m", m, "sensors");
    orc->add_option("--k", k, "on-grid sources");
    orc->add_option("--r-noise", r_noise, "noise subspace rank");
    orc->add_option("--t", t, "snapshots");
    orc->add_option("--delta-deg", delta_deg, "grid resolution");
    orc->add_option("--seed", seed, "seed");

    auto* ek = app.add_subcommand("estimate-k", "train and score the source-count estimator");
    add_config(ek);
    ek->add_option("--method", method, "spectrum source: cbf, mvdr or beamformnet");
    ek->add_option("--model", model_path, "checkpoint for beamformnet");
    ek->add_option("--train-samples", train_n, "training spectra (default: data.samples.train)");
    ek->add_option("--test-samples", test_n, "test spectra (default: data.samples.test)");
    ek->add_option("--epochs", epochs, "estimator epochs");
    ek->add_option("--out", out_path, "accuracy CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    const Streams io{out, err};
    try {
        const bool have_config = !config_path.empty();
        if (*orc) return cmd_oracle(m, k, r_noise, t, delta_deg, seed, io);
        const RunConfig cfg = load_config(config_path, overrides);
        if (*sim) return cmd_simulate(cfg, split, count, out_path, io);
        if (*tr) return cmd_train(cfg, train_data, val_data, out_path, history, io);
        if (*ev) return cmd_eval(cfg, have_config, dataset, methods, model_path, out_path, io);
        if (*sw) return cmd_sweep(cfg, param, values, methods, model_path, samples, out_path, io);
        if (*sp) return cmd_spectrum(cfg, have_config, dataset, index, methods, model_path, out_path, weights, io);
        if (*ek) return cmd_estimate_k(cfg, method, model_path, train_n, test_n, epochs, out_path, io);
    } catch (const error& e) {
        err << "error: " << e.category() << ": " << one_line(e.what()) << "\n";
        return 1;
    } catch (const json::exception& e) {
        err << "error: config: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: io: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    err << "error: usage: no subcommand\n";
    return 2;
}

}  // namespace bfn::cli
