#include "sift/pair_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sift/error.hpp"
#include "sift/log.hpp"
#include "sift/preprocess.hpp"

namespace sift {

std::string_view to_string(PairPolicyKind k) noexcept {
    switch (k) {
        case PairPolicyKind::sift: return "sift";
        case PairPolicyKind::same_image_only: return "same_image_only";
        case PairPolicyKind::same_patient_any: return "same_patient_any";
        default: return "inter_slice_only";
    }
}

PairPolicyKind parse_pair_policy(std::string_view name) {
    for (auto k : {PairPolicyKind::sift, PairPolicyKind::same_image_only, PairPolicyKind::same_patient_any,
                   PairPolicyKind::inter_slice_only})
        if (name == to_string(k)) return k;
    throw ConfigError("unknown pair policy '" + std::string(name) + "'");
}

std::string_view to_string(PairKind k) noexcept {
    switch (k) {
        case PairKind::same_slice: return "same_slice";
        case PairKind::inter_slice: return "inter_slice";
        default: return "inter_view";
    }
}

void PairPolicy::validate() const {
    if (!(view_prob >= 0.0 && view_prob <= 1.0)) throw ConfigError("pair policy: view_prob must lie in [0, 1]");
    if (k < 1) throw ConfigError("pair policy: k must be >= 1");
}

PairSampler::PairSampler(const StudyManifest& manifest, PairPolicy policy)
    : manifest_(&manifest), policy_(policy), other_view_(manifest.entries.size()) {
    policy_.validate();
    std::map<std::tuple<std::string, std::string, Laterality, View>, std::size_t> by_key;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        by_key[{e.patient_id, e.study_id, e.laterality, e.view}] = i;
        patient_volumes_[e.patient_id].push_back(i);
    }
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (auto it = by_key.find(std::tuple{e.patient_id, e.study_id, e.laterality, sift::other_view(e.view)}); it != by_key.end())
            other_view_[i] = it->second;
    }
}

std::optional<std::size_t> PairSampler::other_view(std::size_t volume) const { return other_view_.at(volume); }

PairSample PairSampler::neighbour(SliceRef anchor, Rng& rng) const {
    const int n = manifest_->entries[anchor.volume].n_slices;
    if (n == 1) return {anchor, anchor, PairKind::same_slice};
    const int k = policy_.k;
    // Uniform over {-k..-1, 1..k}; out-of-range offsets are redrawn rather than clamped.
    for (;;) {
        auto delta = static_cast<int>(uniform_int(rng, 0, 2 * k - 1));
        delta = delta < k ? delta - k : delta - k + 1;
        const int idx = anchor.slice_index + delta;
        if (idx >= 0 && idx < n) return {anchor, {anchor.volume, idx}, PairKind::inter_slice};
    }
}

PairSample PairSampler::sample(SliceRef anchor, Rng& rng) const {
    if (anchor.volume >= manifest_->entries.size()) throw Error("anchor volume out of range");
    const auto& vol = manifest_->entries[anchor.volume];
    if (anchor.slice_index < 0 || anchor.slice_index >= vol.n_slices) throw Error("anchor slice out of range");

    switch (policy_.kind) {
        case PairPolicyKind::same_image_only: return {anchor, anchor, PairKind::same_slice};
        case PairPolicyKind::inter_slice_only: return neighbour(anchor, rng);
        case PairPolicyKind::same_patient_any: {
            const auto& vols = patient_volumes_.at(vol.patient_id);
            std::size_t total = 0;
            for (auto v : vols) total += manifest_->entries[v].n_slices;
            auto pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(total) - 1));
            for (auto v : vols) {
                const auto n = static_cast<std::size_t>(manifest_->entries[v].n_slices);
                if (pick < n) {
                    const SliceRef pos{v, static_cast<int>(pick)};
                    const PairKind kind = v != anchor.volume ? PairKind::inter_view
                                          : pos == anchor    ? PairKind::same_slice
                                                             : PairKind::inter_slice;
                    return {anchor, pos, kind};
                }
                pick -= n;
            }
            throw Error("unreachable: patient slice draw");
        }
        case PairPolicyKind::sift:
        default: {
            if (bernoulli(rng, policy_.view_prob)) {
                if (const auto other = other_view_[anchor.volume]) {
                    const int n = manifest_->entries[*other].n_slices;
                    return {anchor, {*other, static_cast<int>(uniform_int(rng, 0, n - 1))}, PairKind::inter_view};
                }
                log::debug("no other view for " + vol.volume_id() + "; falling back to inter-slice positive");
            }
            return neighbour(anchor, rng);
        }
    }
}

PairSample sample_positive(SliceRef anchor, const StudyManifest& manifest, const PairPolicy& policy, Rng& rng) {
    return PairSampler(manifest, policy).sample(anchor, rng);
}

bool is_negative(SliceRef anchor, SliceRef candidate, const StudyManifest& manifest) {
    if (anchor.volume == candidate.volume) return false;
    const auto& a = manifest.entries.at(anchor.volume);
    const auto& c = manifest.entries.at(candidate.volume);
    const bool same_breast = a.patient_id == c.patient_id && a.study_id == c.study_id && a.laterality == c.laterality;
    return !same_breast;
}

void AugmentParams::validate() const {
    if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
        throw ConfigError("augment: crop scale range must satisfy 0 < min <= max <= 1");
    if (!(jitter_strength >= 0.0)) throw ConfigError("augment: jitter_strength must be >= 0");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augment: flip_prob must lie in [0, 1]");
    if (!(blur_prob >= 0.0 && blur_prob <= 1.0)) throw ConfigError("augment: blur_prob must lie in [0, 1]");
    if (output_size < 1) throw ConfigError("augment: output_size must be >= 1");
}

Image flip_horizontal(const Image& image) {
    Image out = image;
    for (int y = 0; y < image.height; ++y) {
        auto* row = &out.at(y, 0);
        std::reverse(row, row + image.width);
    }
    return out;
}

namespace {

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
        norm += kernel[i + radius];
    }
    for (auto& k : kernel) k = static_cast<float>(k / norm);

    Image tmp(image.height, image.width), out(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image.at(y, reflect_index(x + i, image.width));
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(reflect_index(y + i, image.height), x);
            out.at(y, x) = acc;
        }
    return out;
}

Image augment(const Image& image, const AugmentParams& params, Rng& rng) {
    params.validate();
    if (image.height < params.output_size || image.width < params.output_size)
        throw Error("augment: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " smaller than output size " + std::to_string(params.output_size));

    // Random resized crop, aspect ratio log-uniform in [3/4, 4/3]; full image after 10 misses.
    const double area = static_cast<double>(image.height) * image.width;
    int cx = 0, cy = 0, cw = image.width, ch = image.height;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double scale = params.crop_scale_min + (params.crop_scale_max - params.crop_scale_min) * uniform01(rng);
        const double log_ratio = std::log(3.0 / 4.0) + (std::log(4.0 / 3.0) - std::log(3.0 / 4.0)) * uniform01(rng);
        const double ratio = std::exp(log_ratio);
        const auto w = static_cast<int>(std::lround(std::sqrt(scale * area * ratio)));
        const auto h = static_cast<int>(std::lround(std::sqrt(scale * area / ratio)));
        if (w >= 1 && h >= 1 && w <= image.width && h <= image.height) {
            cx = static_cast<int>(uniform_int(rng, 0, image.width - w));
            cy = static_cast<int>(uniform_int(rng, 0, image.height - h));
            cw = w;
            ch = h;
            break;
        }
    }
    Image out = resize_bilinear(crop(image, cx, cy, cw, ch), params.output_size, params.output_size);

    if (bernoulli(rng, params.flip_prob)) out = flip_horizontal(out);

    if (params.jitter_strength > 0.0) {
        const double s = params.jitter_strength;
        const auto brightness = static_cast<float>(1.0 + s * (2.0 * uniform01(rng) - 1.0));
        const auto contrast = static_cast<float>(1.0 + s * (2.0 * uniform01(rng) - 1.0));
        for (auto& p : out.pixels) p = std::clamp(p * brightness, 0.0f, 1.0f);
        const float mean = static_cast<float>(std::accumulate(out.pixels.begin(), out.pixels.end(), 0.0) /
                                              static_cast<double>(out.pixels.size()));
        for (auto& p : out.pixels) p = std::clamp((p - mean) * contrast + mean, 0.0f, 1.0f);
    }

    if (bernoulli(rng, params.blur_prob)) {
        // sigma range [0.1, 2.0] at 224 px, scaled to the output size.
        const double sigma = (0.1 + 1.9 * uniform01(rng)) * params.output_size / 224.0;
        out = gaussian_blur(out, sigma);
    }
    return out;
}

}  // namespace sift
