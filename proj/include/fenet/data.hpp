#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "fenet/errors.hpp"
#include "fenet/fent_io.hpp"
#include "fenet/rng.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

constexpr std::size_t kAntennas = 3;
constexpr std::size_t kRgbChannels = 3;
constexpr std::size_t kRdmChannels = 1;

// One sign instance: an RGB clip [T,C,H,W], three antenna RDM clips stacked
// as [A,T,C,H_r,W_d], and a class label. Both modalities share T.
struct MultimodalSample {
    Tensor<float> rgb;
    Tensor<float> rdm;
    int label = -1;
    std::string id;
};

struct ManifestEntry {
    std::string id;
    int label = -1;
    std::string rgb_path;
    std::array<std::string, kAntennas> rdm_paths;
    std::string split;
};

struct DatasetManifest {
    std::vector<std::string> classes;
    std::vector<ManifestEntry> samples;
    std::uint64_t generator_seed = 0;
    std::filesystem::path base_dir;  // directory of manifest.json, not serialized

    std::vector<const ManifestEntry*> split_entries(const std::string& split) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& s : samples)
            if (s.split == split) out.push_back(&s);
        return out;
    }
};

struct SynthSpec {
    std::size_t classes = 8;
    std::size_t frames = 8;
    std::size_t rgb_size = 16;   // H = W
    std::size_t rdm_size = 16;   // H_r = W_d
    std::size_t train_per_class = 40;
    std::size_t valid_per_class = 10;
    std::size_t test_per_class = 10;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw ConfigError("synth: need at least 2 classes");
        if (frames < 4 || rgb_size < 4 || rdm_size < 4) {
            throw ConfigError("synth: all dimensions must be >= 4");
        }
    }
};

// ---------------------------------------------------------------------------
// Synthetic trajectories
// ---------------------------------------------------------------------------

// Class k moves a bright blob with velocity (cos, sin)(2*pi*k/K) * H/(2T)
// pixels per frame. The blob starts off-center so that range-from-center and
// radial speed trace class-distinct curves; a centered start would collapse
// every class onto the same radar signature.
struct Trajectory {
    double cy, cx;        // frame center
    double y0, x0;        // start position
    double vy, vx;        // per-frame velocity

    static Trajectory for_class(std::size_t k, std::size_t num_classes,
                                std::size_t h, std::size_t frames) {
        Trajectory tr;
        tr.cy = (double(h) - 1.0) / 2.0;
        tr.cx = tr.cy;
        tr.x0 = tr.cx + double(h) / 6.0;
        tr.y0 = tr.cy + double(h) / 10.0;
        const double theta = 2.0 * 3.14159265358979323846 * double(k) / double(num_classes);
        const double speed = double(h) / (2.0 * double(frames));
        tr.vx = std::cos(theta) * speed;
        tr.vy = std::sin(theta) * speed;
        return tr;
    }

    double x(std::size_t t) const { return x0 + vx * double(t); }
    double y(std::size_t t) const { return y0 + vy * double(t); }

    double range_from_center(std::size_t t) const {
        return std::hypot(x(t) - cx, y(t) - cy);
    }

    double radial_speed(std::size_t t) const {
        const double rx = x(t) - cx, ry = y(t) - cy;
        const double r = std::max(std::hypot(rx, ry), 1e-9);
        return (rx * vx + ry * vy) / r;
    }
};

// Row tracks range, column tracks signed radial speed; antenna a shifts the
// bump a columns to the right.
struct RdmBumpCenter {
    double row, col;
};

inline RdmBumpCenter rdm_bump_center(const Trajectory& tr, std::size_t t,
                                     std::size_t antenna, std::size_t rdm_size,
                                     std::size_t rgb_size, std::size_t frames) {
    const double speed_ref = double(rgb_size) / (2.0 * double(frames));
    RdmBumpCenter c;
    c.row = tr.range_from_center(t) / double(rgb_size) * (double(rdm_size) - 1.0);
    c.col = (double(rdm_size) - 1.0) / 2.0 +
            tr.radial_speed(t) / speed_ref * (double(rdm_size) - 1.0) / 2.0 +
            double(antenna);
    return c;
}

namespace detail {

inline void render_gaussian(float* plane, std::size_t h, std::size_t w, double cy,
                            double cx, double sigma) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dy = double(y) - cy;
            const double dx = double(x) - cx;
            plane[y * w + x] = float(std::exp(-(dx * dx + dy * dy) * inv));
        }
}

}  // namespace detail

// Renders one clean (noise-free) sample of class k.
inline MultimodalSample render_synthetic_sample(const SynthSpec& spec, std::size_t k) {
    const std::size_t T = spec.frames, H = spec.rgb_size, R = spec.rdm_size;
    const Trajectory tr = Trajectory::for_class(k, spec.classes, H, T);

    MultimodalSample s;
    s.label = int(k);
    s.rgb = Tensor<float>({T, kRgbChannels, H, H});
    s.rdm = Tensor<float>({kAntennas, T, kRdmChannels, R, R});

    const double sigma_rgb = double(H) / 8.0;
    const double sigma_rdm = double(R) / 10.0;
    std::vector<float> plane(H * H);
    for (std::size_t t = 0; t < T; ++t) {
        detail::render_gaussian(plane.data(), H, H, tr.y(t), tr.x(t), sigma_rgb);
        for (std::size_t c = 0; c < kRgbChannels; ++c) {
            std::copy(plane.begin(), plane.end(),
                      s.rgb.data() + (t * kRgbChannels + c) * H * H);
        }
    }
    for (std::size_t a = 0; a < kAntennas; ++a)
        for (std::size_t t = 0; t < T; ++t) {
            const RdmBumpCenter c = rdm_bump_center(tr, t, a, R, H, T);
            detail::render_gaussian(s.rdm.data() + ((a * T + t) * kRdmChannels) * R * R,
                                    R, R, c.row, c.col, sigma_rdm);
        }
    return s;
}

inline void add_noise(Tensor<float>& t, Rng& rng, double sigma) {
    if (sigma <= 0.0) return;
    for (auto& v : t.value()) v += float(rng.normal(0.0, sigma));
}

// ---------------------------------------------------------------------------
// Manifest JSON
// ---------------------------------------------------------------------------

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["classes"] = m.classes;
    j["generator_seed"] = m.generator_seed;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : m.samples) {
        nlohmann::json e;
        e["id"] = s.id;
        e["label"] = s.label;
        e["rgb_path"] = s.rgb_path;
        e["rdm_paths"] = s.rdm_paths;
        e["split"] = s.split;
        samples.push_back(e);
    }
    j["samples"] = samples;
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j,
                                          const std::filesystem::path& base_dir) {
    DatasetManifest m;
    m.base_dir = base_dir;
    try {
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.generator_seed = j.value("generator_seed", std::uint64_t(0));
        std::unordered_set<std::string> seen_ids;
        for (const auto& e : j.at("samples")) {
            ManifestEntry s;
            s.id = e.at("id").get<std::string>();
            s.label = e.at("label").get<int>();
            s.rgb_path = e.at("rgb_path").get<std::string>();
            const auto paths = e.at("rdm_paths").get<std::vector<std::string>>();
            if (paths.size() != kAntennas) {
                throw DataError("manifest: sample " + s.id + " has " +
                                std::to_string(paths.size()) + " rdm paths, want 3");
            }
            std::copy(paths.begin(), paths.end(), s.rdm_paths.begin());
            s.split = e.at("split").get<std::string>();
            if (s.split != "train" && s.split != "valid" && s.split != "test") {
                throw DataError("manifest: sample " + s.id + " has unknown split '" +
                                s.split + "'");
            }
            if (s.label < 0 || std::size_t(s.label) >= m.classes.size()) {
                throw DataError("manifest: sample " + s.id + " label " +
                                std::to_string(s.label) + " out of range [0," +
                                std::to_string(m.classes.size()) + ")");
            }
            if (!seen_ids.insert(s.id).second) {
                throw DataError("manifest: duplicate sample id " + s.id);
            }
            m.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: malformed json: ") + e.what());
    }
    return m;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << manifest_to_json(m).dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest: parse error in " + path.string() + ": " + e.what());
    }
    DatasetManifest m = manifest_from_json(j, path.parent_path());
    for (const auto& s : m.samples) {
        if (!std::filesystem::exists(m.base_dir / s.rgb_path)) {
            throw DataError("manifest: missing file " + (m.base_dir / s.rgb_path).string());
        }
        for (const auto& p : s.rdm_paths) {
            if (!std::filesystem::exists(m.base_dir / p)) {
                throw DataError("manifest: missing file " + (m.base_dir / p).string());
            }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

inline DatasetManifest generate_synthetic(const SynthSpec& spec,
                                          const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create dataset directory: " + out_dir.string());
    }

    DatasetManifest m;
    m.base_dir = out_dir;
    m.generator_seed = spec.seed;
    for (std::size_t k = 0; k < spec.classes; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%02zu", k);
        m.classes.push_back(name);
    }

    const struct {
        const char* split;
        std::size_t count;
    } splits[] = {{"train", spec.train_per_class},
                  {"valid", spec.valid_per_class},
                  {"test", spec.test_per_class}};

    for (const auto& sp : splits) {
        std::filesystem::create_directories(out_dir / sp.split, ec);
        if (ec) throw IoError("cannot create split directory: " +
                              (out_dir / sp.split).string());
    }

    for (std::size_t k = 0; k < spec.classes; ++k) {
        const MultimodalSample clean = render_synthetic_sample(spec, k);
        std::size_t within_class = 0;
        for (std::size_t si = 0; si < 3; ++si) {
            for (std::size_t i = 0; i < splits[si].count; ++i, ++within_class) {
                MultimodalSample s;
                s.rgb = clean.rgb.clone();
                s.rdm = clean.rdm.clone();
                s.label = int(k);
                char id[48];
                std::snprintf(id, sizeof(id), "c%02zu_s%04zu", k, within_class);
                s.id = id;
                Rng rng = rng_for(spec.seed, "synth-noise",
                                  (si << 24) ^ (k << 12) ^ within_class);
                add_noise(s.rgb, rng, spec.noise_sigma);
                add_noise(s.rdm, rng, spec.noise_sigma);

                ManifestEntry e;
                e.id = s.id;
                e.label = s.label;
                e.split = splits[si].split;
                const std::string stem = std::string(splits[si].split) + "/" + s.id;
                e.rgb_path = stem + ".rgb.fent";
                write_fent(out_dir / e.rgb_path, s.rgb);
                for (std::size_t a = 0; a < kAntennas; ++a) {
                    e.rdm_paths[a] = stem + ".rdm" + std::to_string(a) + ".fent";
                    Tensor<float> antenna({spec.frames, kRdmChannels, spec.rdm_size,
                                           spec.rdm_size});
                    const std::size_t plane = spec.frames * kRdmChannels *
                                              spec.rdm_size * spec.rdm_size;
                    std::copy(s.rdm.data() + a * plane, s.rdm.data() + (a + 1) * plane,
                              antenna.data());
                    write_fent(out_dir / e.rdm_paths[a], antenna);
                }
                m.samples.push_back(std::move(e));
            }
        }
    }
    write_manifest(m, out_dir / "manifest.json");
    return m;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

inline MultimodalSample load_sample(const DatasetManifest& m, const ManifestEntry& e) {
    MultimodalSample s;
    s.id = e.id;
    s.label = e.label;
    s.rgb = read_fent(m.base_dir / e.rgb_path);
    if (s.rgb.rank() != 4) {
        throw DataError("sample " + e.id + ": rgb tensor has rank " +
                        std::to_string(s.rgb.rank()) + ", want [T,C,H,W]");
    }
    const std::size_t T = s.rgb.shape()[0];
    std::vector<Tensor<float>> antennas;
    for (std::size_t a = 0; a < kAntennas; ++a) {
        Tensor<float> t = read_fent(m.base_dir / e.rdm_paths[a]);
        if (t.rank() != 4 || t.shape()[0] != T) {
            throw DataError("sample " + e.id + ": rdm antenna " + std::to_string(a) +
                            " shape " + shape_str(t.shape()) +
                            " is not synchronized [T,C,H,W] with T=" + std::to_string(T));
        }
        antennas.push_back(std::move(t));
    }
    const Shape& ash = antennas[0].shape();
    s.rdm = Tensor<float>({kAntennas, ash[0], ash[1], ash[2], ash[3]});
    const std::size_t plane = antennas[0].numel();
    for (std::size_t a = 0; a < kAntennas; ++a) {
        if (antennas[a].shape() != ash) {
            throw DataError("sample " + e.id + ": antenna shapes differ");
        }
        std::copy(antennas[a].data(), antennas[a].data() + plane,
                  s.rdm.data() + a * plane);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

namespace detail {

// Pixel-center-aligned bilinear sampling with edge clamping.
inline void bilinear_resize_plane(const float* src, std::size_t h, std::size_t w,
                                  float* dst, std::size_t th, std::size_t tw) {
    const double sy = double(h) / double(th);
    const double sx = double(w) / double(tw);
    for (std::size_t y = 0; y < th; ++y) {
        double fy = (double(y) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), double(h) - 1.0);
        const std::size_t y0 = std::size_t(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - double(y0);
        for (std::size_t x = 0; x < tw; ++x) {
            double fx = (double(x) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), double(w) - 1.0);
            const std::size_t x0 = std::size_t(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - double(x0);
            const double top = double(src[y0 * w + x0]) * (1.0 - wx) +
                               double(src[y0 * w + x1]) * wx;
            const double bot = double(src[y1 * w + x0]) * (1.0 - wx) +
                               double(src[y1 * w + x1]) * wx;
            dst[y * tw + x] = float(top * (1.0 - wy) + bot * wy);
        }
    }
}

// Standardizes each channel of a [..., C, H, W] stack of planes grouped as
// `groups` x `channels` x `frames_per_group` planes, over all frames in the
// group/channel. Returns true if any channel hit the variance floor.
inline bool standardize_channel(float* data, std::size_t count) {
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += data[i];
    mean /= double(count);
    double var = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = double(data[i]) - mean;
        var += d * d;
    }
    var /= double(count);
    const bool degenerate = var < 1e-6;
    const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-6));
    for (std::size_t i = 0; i < count; ++i) {
        data[i] = float((double(data[i]) - mean) * inv_std);
    }
    return degenerate;
}

}  // namespace detail

// Bilinear spatial resize plus per-clip, per-channel standardization.
// rgb_hw of 0 keeps the native RGB size; rdm_hw of 0 keeps the native RDM
// size. RDM channels are standardized per antenna.
inline MultimodalSample preprocess(const MultimodalSample& raw, std::size_t rgb_hw = 0,
                                   std::size_t rdm_hw = 0) {
    MultimodalSample out;
    out.id = raw.id;
    out.label = raw.label;

    const std::size_t T = raw.rgb.shape()[0], C = raw.rgb.shape()[1];
    const std::size_t H = raw.rgb.shape()[2], W = raw.rgb.shape()[3];
    const std::size_t th = rgb_hw ? rgb_hw : H, tw = rgb_hw ? rgb_hw : W;
    out.rgb = Tensor<float>({T, C, th, tw});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
            detail::bilinear_resize_plane(raw.rgb.data() + (t * C + c) * H * W, H, W,
                                          out.rgb.data() + (t * C + c) * th * tw, th,
                                          tw);
    // channel-major standardization: gather per channel across frames
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<float> chan(T * th * tw);
        for (std::size_t t = 0; t < T; ++t)
            std::copy(out.rgb.data() + (t * C + c) * th * tw,
                      out.rgb.data() + (t * C + c + 1) * th * tw,
                      chan.data() + t * th * tw);
        if (detail::standardize_channel(chan.data(), chan.size())) {
            std::cerr << "[fenet] warning: sample " << raw.id << " rgb channel " << c
                      << " is constant; standardized to zeros\n";
        }
        for (std::size_t t = 0; t < T; ++t)
            std::copy(chan.data() + t * th * tw, chan.data() + (t + 1) * th * tw,
                      out.rgb.data() + (t * C + c) * th * tw);
    }

    const std::size_t A = raw.rdm.shape()[0], Tr = raw.rdm.shape()[1],
                      Cr = raw.rdm.shape()[2], Hr = raw.rdm.shape()[3],
                      Wr = raw.rdm.shape()[4];
    const std::size_t rh = rdm_hw ? rdm_hw : Hr, rw = rdm_hw ? rdm_hw : Wr;
    out.rdm = Tensor<float>({A, Tr, Cr, rh, rw});
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t t = 0; t < Tr; ++t)
            for (std::size_t c = 0; c < Cr; ++c)
                detail::bilinear_resize_plane(
                    raw.rdm.data() + (((a * Tr + t) * Cr + c)) * Hr * Wr, Hr, Wr,
                    out.rdm.data() + (((a * Tr + t) * Cr + c)) * rh * rw, rh, rw);
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t c = 0; c < Cr; ++c) {
            std::vector<float> chan(Tr * rh * rw);
            for (std::size_t t = 0; t < Tr; ++t)
                std::copy(out.rdm.data() + ((a * Tr + t) * Cr + c) * rh * rw,
                          out.rdm.data() + ((a * Tr + t) * Cr + c + 1) * rh * rw,
                          chan.data() + t * rh * rw);
            if (detail::standardize_channel(chan.data(), chan.size())) {
                std::cerr << "[fenet] warning: sample " << raw.id << " rdm antenna "
                          << a << " channel " << c
                          << " is constant; standardized to zeros\n";
            }
            for (std::size_t t = 0; t < Tr; ++t)
                std::copy(chan.data() + t * rh * rw, chan.data() + (t + 1) * rh * rw,
                          out.rdm.data() + ((a * Tr + t) * Cr + c) * rh * rw);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
    Tensor<float> rgb;  // [B,T,C,H,W]
    Tensor<float> rdm;  // [B,A,T,C,H_r,W_d]
    std::vector<int> labels;
    std::vector<std::string> ids;
};

// Seeded permutation of [0, n). No seed means identity order.
inline std::vector<std::size_t> epoch_order(std::size_t n,
                                            std::optional<std::uint64_t> shuffle_seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = std::size_t(rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
    }
    return order;
}

inline Batch assemble_batch(const std::vector<MultimodalSample>& samples,
                            const std::vector<std::size_t>& indices) {
    Batch b;
    const auto& first = samples[indices[0]];
    Shape rgb_shape = first.rgb.shape();
    Shape rdm_shape = first.rdm.shape();
    rgb_shape.insert(rgb_shape.begin(), indices.size());
    rdm_shape.insert(rdm_shape.begin(), indices.size());
    b.rgb = Tensor<float>(rgb_shape);
    b.rdm = Tensor<float>(rdm_shape);
    const std::size_t rgb_n = first.rgb.numel();
    const std::size_t rdm_n = first.rdm.numel();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& s = samples[indices[i]];
        if (s.rgb.shape() != first.rgb.shape() || s.rdm.shape() != first.rdm.shape()) {
            throw DataError("batch: sample " + s.id + " shape differs from " + first.id);
        }
        std::copy(s.rgb.data(), s.rgb.data() + rgb_n, b.rgb.data() + i * rgb_n);
        std::copy(s.rdm.data(), s.rdm.data() + rdm_n, b.rdm.data() + i * rdm_n);
        b.labels.push_back(s.label);
        b.ids.push_back(s.id);
    }
    return b;
}

// Covers every sample exactly once; the last batch may be short.
inline std::vector<std::vector<std::size_t>> batch_indices(
    std::size_t n, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
    if (n == 0) throw UsageError("batch_indices: empty split");
    if (batch_size == 0) throw UsageError("batch_indices: batch_size must be >= 1");
    const auto order = epoch_order(n, shuffle_seed);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(start + batch_size, n);
        batches.emplace_back(order.begin() + std::ptrdiff_t(start),
                             order.begin() + std::ptrdiff_t(end));
    }
    return batches;
}

// Loads and preprocesses a whole split into memory.
inline std::vector<MultimodalSample> load_split(const DatasetManifest& m,
                                                const std::string& split,
                                                std::size_t rgb_hw = 0,
                                                std::size_t rdm_hw = 0) {
    const auto entries = m.split_entries(split);
    if (entries.empty()) throw UsageError("split '" + split + "' is empty");
    std::vector<MultimodalSample> out;
    out.reserve(entries.size());
    for (const auto* e : entries) {
        out.push_back(preprocess(load_sample(m, *e), rgb_hw, rdm_hw));
    }
    return out;
}

}  // namespace fenet
