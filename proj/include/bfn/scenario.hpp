#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bfn/array_model.hpp"
#include "bfn/binary_io.hpp"
#include "bfn/complexlin.hpp"
#include "bfn/error.hpp"
#include "bfn/parallel.hpp"
#include "bfn/rng.hpp"

namespace bfn {

/// What to draw for each sample. Single-valued K or SNR are one-element sets.
struct ScenarioConfig {
    ArrayGeometry geometry = ArrayGeometry::half_wavelength_ula(8, WaveConfig{});
    WaveConfig wave{};
    double delta_deg = 1.0;
    std::size_t T = 50;
    std::vector<std::size_t> k_set{2};
    std::vector<double> snr_set_db{10.0};
    bool coherent = false;
    double rho_err = 0.0;
    bool on_grid = false;
    // Two sources with a fixed angular gap (degrees); overrides k_set.
    std::optional<double> separation_deg;

    std::size_t M() const noexcept { return geometry.size(); }
    AngleGrid grid() const { return AngleGrid(delta_deg); }
};

struct Scenario {
    std::size_t K = 0;
    std::size_t T = 0;
    double snr_db = 0.0;
    bool coherent = false;
    std::vector<double> angles;              // radians
    std::vector<std::uint32_t> grid_labels;  // nearest grid indices
    ComplexMatrix X;                         // M×T
    // Ground truth; empty for scenarios read back from a dataset file.
    ComplexMatrix S_true;  // K×T
    ComplexMatrix N_true;  // M×T
    ArrayGeometry true_geometry;

    /// Binary label vector over a grid of size R.
    std::vector<int> label_vector(std::size_t R) const {
        std::vector<int> y(R, 0);
        for (auto l : grid_labels) y.at(l) = 1;
        return y;
    }
};

/// Per-element noise power for unit-power sources.
inline double noise_variance(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

/// Draws one scenario. Draw order: K, SNR, angles, array perturbation,
/// source waveforms, noise.
inline Scenario sample_scenario(const ScenarioConfig& cfg, Rng& rng) {
    const std::size_t M = cfg.M();
    const AngleGrid grid = cfg.grid();
    if (cfg.k_set.empty() && !cfg.separation_deg) throw validation_error("empty K set");
    if (cfg.snr_set_db.empty()) throw validation_error("empty SNR set");
    if (cfg.T == 0) throw validation_error("T must be positive");

    Scenario sc;
    sc.T = cfg.T;
    sc.coherent = cfg.coherent;
    sc.K = cfg.separation_deg ? 2 : cfg.k_set[cfg.k_set.size() == 1 ? 0 : rng.below(cfg.k_set.size())];
    sc.snr_db = cfg.snr_set_db[cfg.snr_set_db.size() == 1 ? 0 : rng.below(cfg.snr_set_db.size())];
    const std::size_t K = sc.K;
    if (K == 0) throw validation_error("K must be at least 1");
    if (K >= M) throw validation_error("K=" + std::to_string(K) + " must be below M=" + std::to_string(M));
    if (K > grid.size()) throw validation_error("K exceeds the number of grid points");

    constexpr int kMaxRedraws = 100000;
    for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxRedraws) throw validation_error("could not draw distinct grid labels");
        sc.angles.assign(K, 0.0);
        if (cfg.separation_deg) {
            const double gap = deg_to_rad(*cfg.separation_deg);
            if (!(gap > 0.0) || gap >= kPi) throw validation_error("separation must lie in (0, 180) degrees");
            sc.angles[0] = rng.uniform(-kPi / 2.0, kPi / 2.0 - gap);
            sc.angles[1] = sc.angles[0] + gap;
        } else {
            for (auto& a : sc.angles) a = rng.uniform(-kPi / 2.0, kPi / 2.0);
        }
        sc.grid_labels.resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            sc.grid_labels[k] = static_cast<std::uint32_t>(grid.nearest(sc.angles[k]));
            if (cfg.on_grid) sc.angles[k] = grid[sc.grid_labels[k]];
        }
        auto sorted = sc.grid_labels;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) break;
    }

    sc.true_geometry = perturb_positions(cfg.geometry, cfg.wave, cfg.rho_err, rng);
    const ComplexMatrix a_active = steering_matrix(sc.true_geometry, cfg.wave, sc.angles);

    sc.S_true = ComplexMatrix(K, cfg.T);
    if (cfg.coherent) {
        // Rank one: a shared waveform with a fixed unit phase per source.
        std::vector<cplx> phase(K);
        for (auto& p : phase) p = std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
        for (std::size_t t = 0; t < cfg.T; ++t) {
            const cplx g = rng.complex_normal();
            for (std::size_t k = 0; k < K; ++k) sc.S_true.set(k, t, g * phase[k]);
        }
    } else {
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t t = 0; t < cfg.T; ++t) sc.S_true.set(k, t, rng.complex_normal());
    }

    const double sigma2 = noise_variance(sc.snr_db);
    sc.N_true = ComplexMatrix(M, cfg.T);
    for (std::size_t j = 0; j < M; ++j)
        for (std::size_t t = 0; t < cfg.T; ++t) sc.N_true.set(j, t, rng.complex_normal(sigma2));

    sc.X = matmul(a_active, sc.S_true) + sc.N_true;
    return sc;
}

/// Sample `index` of the stream rooted at `base_seed`.
inline Scenario sample_at(const ScenarioConfig& cfg, std::uint64_t base_seed, std::uint64_t index) {
    Rng rng(stream_seed(base_seed, index));
    return sample_scenario(cfg, rng);
}

inline std::vector<Scenario> generate_scenarios(const ScenarioConfig& cfg, std::uint64_t base_seed, std::size_t count) {
    std::vector<Scenario> out(count);
    parallel_for(count, [&](std::size_t i) { out[i] = sample_at(cfg, base_seed, i); });
    return out;
}

// ---------------------------------------------------------------------------
// Dataset file "BFD1"

inline constexpr char kDatasetMagic[4] = {'B', 'F', 'D', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
    std::uint32_t M = 0;
    std::uint32_t T = 0;
    std::uint32_t R = 0;
    double delta_rad = 0.0;
    double f_hz = 0.0;
    double c_mps = 0.0;
    std::uint64_t sample_count = 0;
    std::uint64_t base_seed = 0;

    friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
    DatasetHeader header;
    std::vector<Scenario> samples;
};

inline DatasetHeader make_header(const ScenarioConfig& cfg, std::uint64_t base_seed, std::size_t count) {
    DatasetHeader h;
    h.M = static_cast<std::uint32_t>(cfg.M());
    h.T = static_cast<std::uint32_t>(cfg.T);
    h.R = static_cast<std::uint32_t>(cfg.grid().size());
    h.delta_rad = deg_to_rad(cfg.delta_deg);
    h.f_hz = cfg.wave.f;
    h.c_mps = cfg.wave.c;
    h.sample_count = count;
    h.base_seed = base_seed;
    return h;
}

inline std::vector<std::uint8_t> encode_dataset(const DatasetHeader& header, const std::vector<Scenario>& samples) {
    if (header.sample_count != samples.size()) {
        throw validation_error("header sample_count does not match the number of scenarios");
    }
    io::Writer w;
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 4));
    w.u32(kDatasetVersion);
    w.u32(header.M);
    w.u32(header.T);
    w.u32(header.R);
    w.f64(header.delta_rad);
    w.f64(header.f_hz);
    w.f64(header.c_mps);
    w.u64(header.sample_count);
    w.u64(header.base_seed);
    for (const auto& s : samples) {
        if (s.X.rows() != header.M || s.X.cols() != header.T) {
            throw shape_error("scenario X is " + s.X.shape_str() + ", dataset expects " +
                              std::to_string(header.M) + "x" + std::to_string(header.T));
        }
        if (s.angles.size() != s.K || s.grid_labels.size() != s.K) throw shape_error("scenario K disagrees with labels");
        w.u32(static_cast<std::uint32_t>(s.K));
        w.u8(s.coherent ? 1 : 0);
        w.f64(s.snr_db);
        for (double a : s.angles) w.f64(a);
        for (auto l : s.grid_labels) w.u32(l);
        for (std::size_t k = 0; k < s.X.size(); ++k) {
            w.f64(s.X.re_plane()[k]);
            w.f64(s.X.im_plane()[k]);
        }
    }
    w.seal();
    return w.buffer();
}

namespace detail {

inline Dataset parse_dataset_body(std::span<const std::uint8_t> body) {
    io::Reader r(body);
    const std::string magic = r.str(4);
    if (magic != std::string(kDatasetMagic, 4)) throw bad_magic_error("not a BFD1 dataset");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) throw bad_version_error("unsupported dataset version " + std::to_string(version));
    Dataset d;
    auto& h = d.header;
    h.M = r.u32();
    h.T = r.u32();
    h.R = r.u32();
    h.delta_rad = r.f64();
    h.f_hz = r.f64();
    h.c_mps = r.f64();
    h.sample_count = r.u64();
    h.base_seed = r.u64();
    if (h.M == 0 || h.T == 0 || h.R == 0) throw validation_error("dataset header has a zero count");
    const std::size_t x_bytes = static_cast<std::size_t>(h.M) * h.T * 16;
    for (std::uint64_t n = 0; n < h.sample_count; ++n) {
        Scenario s;
        s.K = r.u32();
        s.T = h.T;
        s.coherent = r.u8() != 0;
        s.snr_db = r.f64();
        r.need(s.K * 12 + x_bytes);
        s.angles.resize(s.K);
        for (auto& a : s.angles) a = r.f64();
        s.grid_labels.resize(s.K);
        for (auto& l : s.grid_labels) l = r.u32();
        s.X = ComplexMatrix(h.M, h.T);
        for (std::size_t k = 0; k < s.X.size(); ++k) {
            s.X.re_plane()[k] = r.f64();
            s.X.im_plane()[k] = r.f64();
        }
        d.samples.push_back(std::move(s));
    }
    if (r.remaining() != 0) throw format_error("trailing_bytes", "dataset has unexpected trailing bytes");
    return d;
}

}  // namespace detail

/// Decodes a dataset; the trailing CRC32 covers every preceding byte.
inline Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw truncated_error("dataset shorter than its checksum");
    if (std::string(reinterpret_cast<const char*>(bytes.data()), 4) != std::string(kDatasetMagic, 4)) {
        throw bad_magic_error("not a BFD1 dataset");
    }
    if (bytes.size() >= 8) {
        io::Reader head(bytes.subspan(4, 4));
        const std::uint32_t version = head.u32();
        if (version != kDatasetVersion) throw bad_version_error("unsupported dataset version " + std::to_string(version));
    }
    const auto body = bytes.first(bytes.size() - 4);
    io::Reader tail(bytes.last(4));
    const std::uint32_t stored = tail.u32();
    if (io::crc32(body) != stored) {
        // A short file also fails the checksum; report it as truncation when
        // the body cannot be parsed to completion.
        try {
            (void)detail::parse_dataset_body(body);
        } catch (const truncated_error&) {
            throw;
        } catch (const error&) {
        }
        throw checksum_error("dataset checksum mismatch");
    }
    return detail::parse_dataset_body(body);
}

inline void write_dataset(const std::filesystem::path& path, const DatasetHeader& header, const std::vector<Scenario>& samples) {
    io::write_file_atomic(path, encode_dataset(header, samples));
}

inline Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

}  // namespace bfn
