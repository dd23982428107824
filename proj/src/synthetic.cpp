#include "sift/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sift/error.hpp"
#include "sift/parallel.hpp"
#include "sift/rng.hpp"

namespace fs = std::filesystem;

namespace sift {

void SynthConfig::validate() const {
    if (n_patients < 1) throw ConfigError("synthetic: n_patients must be >= 1");
    if (!(abnormal_fraction > 0.0 && abnormal_fraction < 1.0))
        throw ConfigError("synthetic: abnormal_fraction must lie in (0, 1)");
    if (abnormal_fraction * n_patients < 1.0)
        throw ConfigError("synthetic: abnormal_fraction * n_patients must be >= 1");
    if (slices_per_volume < 1) throw ConfigError("synthetic: slices_per_volume must be >= 1");
    if (slice_height < 16 || slice_width < 16) throw ConfigError("synthetic: slice shape must be at least 16x16");
    if (!(lesion_intensity_boost > 0.0)) throw ConfigError("synthetic: lesion_intensity_boost must be > 0");
    if (!(lesion_radius_min > 0.0 && lesion_radius_min <= lesion_radius_max))
        throw ConfigError("synthetic: lesion radius range must satisfy 0 < min <= max");
    if (lesion_z_extent < 1 || lesion_z_extent > slices_per_volume)
        throw ConfigError("synthetic: lesion_z_extent must lie in [1, slices_per_volume]");
    // The lesion center is placed inside the inner part of the breast mask, which spans
    // roughly a quarter of the short side; the lesion has to fit there.
    if (2.0 * lesion_radius_max + 2.0 > 0.25 * std::min(slice_height, slice_width))
        throw ConfigError("synthetic: lesion does not fit inside the slice");
}

int SynthConfig::abnormal_patients() const {
    return std::clamp(static_cast<int>(std::lround(abnormal_fraction * n_patients)), 1, n_patients);
}

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Lattice value noise in [-1, 1] with trilinear smoothstep interpolation.
class ValueNoise {
public:
    explicit ValueNoise(std::uint64_t seed) : seed_(seed) {}

    [[nodiscard]] double operator()(double x, double y, double z) const {
        const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
        const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
                   iz = static_cast<std::int64_t>(fz);
        const double tx = smoothstep(x - fx), ty = smoothstep(y - fy), tz = smoothstep(z - fz);
        double c[2][2][2];
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int d = 0; d < 2; ++d) c[a][b][d] = lattice(ix + a, iy + b, iz + d);
        auto lerp = [](double u, double v, double t) { return u + (v - u) * t; };
        const double x00 = lerp(c[0][0][0], c[1][0][0], tx), x10 = lerp(c[0][1][0], c[1][1][0], tx);
        const double x01 = lerp(c[0][0][1], c[1][0][1], tx), x11 = lerp(c[0][1][1], c[1][1][1], tx);
        return lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz);
    }

private:
    [[nodiscard]] double lattice(std::int64_t x, std::int64_t y, std::int64_t z) const {
        const std::uint64_t h = derive_seed(seed_, {static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y),
                                                    static_cast<std::uint64_t>(z)});
        return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
    }

    std::uint64_t seed_;
};

struct BreastShape {
    double chest_x;  // x coordinate of the chest wall (0 or width)
    double center_y;
    double semi_x;
    double semi_y;
    bool mirrored;  // R side: chest wall on the right edge

    /// Normalized elliptical radius; < 1 inside the breast.
    [[nodiscard]] double rho(double x, double y) const {
        const double dx = (x - chest_x) / semi_x, dy = (y - center_y) / semi_y;
        return std::sqrt(dx * dx + dy * dy);
    }
    /// Maps normalized breast coordinates (u = depth from chest wall in [0,1], v in [-1,1]) to pixels.
    [[nodiscard]] std::pair<double, double> to_pixel(double u, double v) const {
        return {mirrored ? chest_x - u * semi_x : chest_x + u * semi_x, center_y + v * semi_y};
    }
};

BreastShape make_shape(const SynthConfig& cfg, Laterality lat, View view, Rng& rng) {
    const double h = cfg.slice_height, w = cfg.slice_width;
    BreastShape s;
    s.mirrored = lat == Laterality::R;
    s.chest_x = s.mirrored ? w : 0.0;
    if (view == View::CC) {
        s.center_y = h * (0.5 + 0.02 * (uniform01(rng) - 0.5));
        s.semi_x = w * (0.72 + 0.10 * uniform01(rng));
        s.semi_y = h * (0.40 + 0.05 * uniform01(rng));
    } else {
        s.center_y = h * (0.46 + 0.02 * (uniform01(rng) - 0.5));
        s.semi_x = w * (0.70 + 0.10 * uniform01(rng));
        s.semi_y = h * (0.44 + 0.04 * uniform01(rng));
    }
    return s;
}

struct LesionPlan {
    double u, v;  // normalized breast coordinates for the CC view
    double radius, aspect;
    int first_slice;
};

// MLO projects the same lesion slightly higher and compressed vertically.
std::pair<double, double> view_coords(const LesionPlan& p, View view) {
    if (view == View::CC) return {p.u, p.v};
    return {p.u * 0.95, 0.8 * p.v - 0.1};
}

GeneratedVolume render_volume(const SynthConfig& cfg, int patient, Laterality lat, View view, double density,
                              std::uint64_t side_seed, const std::optional<LesionPlan>& lesion, Rng& rng) {
    GeneratedVolume g;
    auto& r = g.record;
    r.patient_id = "P" + std::string(4 - std::min<std::size_t>(4, std::to_string(patient).size()), '0') +
                   std::to_string(patient);
    r.study_id = "S0";
    r.laterality = lat;
    r.view = view;
    r.path = fs::path("volumes") / r.volume_id();
    r.n_slices = cfg.slices_per_volume;
    r.class_label = lesion ? ClassLabel::abnormal : ClassLabel::normal;

    const BreastShape shape = make_shape(cfg, lat, view, rng);
    const ValueNoise noise(side_seed);
    const double phase_x = 1000.0 * uniform01(rng), phase_y = 1000.0 * uniform01(rng), phase_z = 1000.0 * uniform01(rng);

    std::optional<LesionTruth> truth;
    if (lesion) {
        const auto [u, v] = view_coords(*lesion, view);
        const auto [cx, cy] = shape.to_pixel(u, v);
        truth = LesionTruth{cx, cy, lesion->radius, lesion->radius * lesion->aspect, lesion->first_slice,
                            cfg.lesion_z_extent};
    }

    const int h = cfg.slice_height, w = cfg.slice_width, n = cfg.slices_per_volume;
    g.volume.assign(n, Image(h, w));
    for (int z = 0; z < n; ++z) {
        Image& slice = g.volume[z];
        double amp_z = 0.0;
        if (truth && z >= truth->first_slice && z < truth->first_slice + truth->z_extent) {
            const double half = std::max(1.0, 0.5 * (truth->z_extent - 1));
            const double dz = (z - (truth->first_slice + 0.5 * (truth->z_extent - 1))) / half;
            amp_z = cfg.lesion_intensity_boost * (1.0 - 0.3 * dz * dz);
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double rho = shape.rho(x + 0.5, y + 0.5);
                double value = 0.0;
                if (rho < 1.0) {
                    // Three octaves; in-plane cells of 32/16/8 px, through-plane 8/4/2 slices.
                    double fbm = 0.0, amp = 0.5, norm = 0.0;
                    for (int o = 0; o < 3; ++o) {
                        const double f = std::ldexp(1.0, o);
                        fbm += amp * noise((x + phase_x) * f / 32.0, (y + phase_y) * f / 32.0, (z + phase_z) * f / 8.0);
                        norm += amp;
                        amp *= 0.5;
                    }
                    fbm /= norm;
                    const double edge = rho < 0.9 ? 1.0 : smoothstep((1.0 - rho) / 0.1);
                    value = edge * (density + 0.18 * fbm);
                    if (amp_z > 0.0) {
                        const double dx = (x + 0.5 - truth->center_x) / truth->radius_x;
                        const double dy = (y + 0.5 - truth->center_y) / truth->radius_y;
                        const double e = dx * dx + dy * dy;
                        if (e <= 1.0) value += amp_z * std::exp(-e / (2.0 * 1.5 * 1.5));
                    }
                }
                value += 0.012 * normal01(rng);
                slice.at(y, x) = static_cast<float>(std::clamp(value, 0.0, 1.0));
            }
        }
    }

    if (truth) {
        const int x0 = std::max(0, static_cast<int>(std::floor(truth->center_x - truth->radius_x)));
        const int y0 = std::max(0, static_cast<int>(std::floor(truth->center_y - truth->radius_y)));
        const int x1 = std::min(w, static_cast<int>(std::ceil(truth->center_x + truth->radius_x)));
        const int y1 = std::min(h, static_cast<int>(std::ceil(truth->center_y + truth->radius_y)));
        r.annotation = Annotation{truth->first_slice + (truth->z_extent - 1) / 2, {x0, y0, x1 - x0, y1 - y0}};
    }
    g.lesion = truth;
    return g;
}

std::vector<bool> abnormal_assignment(const SynthConfig& cfg) {
    std::vector<int> order(cfg.n_patients);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(cfg.seed, {0xab});
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)))]);
    std::vector<bool> abnormal(cfg.n_patients, false);
    for (int i = 0; i < cfg.abnormal_patients(); ++i) abnormal[order[i]] = true;
    return abnormal;
}

}  // namespace

std::vector<GeneratedVolume> generate_patient(const SynthConfig& config, int patient_index) {
    config.validate();
    if (patient_index < 0 || patient_index >= config.n_patients) throw Error("patient index out of range");
    const bool abnormal = abnormal_assignment(config)[patient_index];
    Rng rng = make_rng(config.seed, {0x9a7, static_cast<std::uint64_t>(patient_index)});

    const double density = 0.30 + 0.12 * uniform01(rng);
    std::optional<Laterality> lesion_side;
    std::optional<LesionPlan> plan;
    if (abnormal) {
        lesion_side = bernoulli(rng, 0.5) ? Laterality::L : Laterality::R;
        LesionPlan p;
        // Inner region keeps the lesion away from the skin line in both views.
        p.u = 0.25 + 0.35 * uniform01(rng);
        p.v = -0.35 + 0.7 * uniform01(rng);
        p.radius = config.lesion_radius_min + (config.lesion_radius_max - config.lesion_radius_min) * uniform01(rng);
        p.aspect = 0.7 + 0.3 * uniform01(rng);
        p.first_slice = static_cast<int>(uniform_int(rng, 0, config.slices_per_volume - config.lesion_z_extent));
        plan = p;
    }

    std::vector<GeneratedVolume> out;
    for (Laterality lat : {Laterality::L, Laterality::R}) {
        const std::uint64_t side_seed = derive_seed(config.seed, {0x51de, static_cast<std::uint64_t>(patient_index),
                                                                  static_cast<std::uint64_t>(lat)});
        for (View view : {View::CC, View::MLO}) {
            const bool has_lesion = lesion_side && *lesion_side == lat;
            out.push_back(render_volume(config, patient_index, lat, view, density, side_seed,
                                        has_lesion ? plan : std::nullopt, rng));
        }
    }
    return out;
}

StudyManifest generate_dataset(const SynthConfig& config, const fs::path& out_dir, int workers) {
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());

    std::vector<std::vector<VolumeRecord>> records(config.n_patients);
    parallel_for(static_cast<std::size_t>(config.n_patients), workers, [&](std::size_t p) {
        for (auto& g : generate_patient(config, static_cast<int>(p))) {
            write_volume(out_dir / g.record.path, g.volume);
            records[p].push_back(std::move(g.record));
        }
    });

    StudyManifest manifest;
    manifest.root_path = out_dir;
    for (auto& rs : records)
        for (auto& r : rs) manifest.entries.push_back(std::move(r));
    write_manifest(manifest, out_dir / "manifest.csv");
    return manifest;
}

}  // namespace sift
