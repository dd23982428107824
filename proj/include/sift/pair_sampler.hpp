#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "sift/dataset.hpp"
#include "sift/image.hpp"
#include "sift/rng.hpp"

namespace sift {

enum class PairPolicyKind {
    sift,              // inter-view with probability view_prob, else neighbouring slice
    same_image_only,   // positive is the anchor itself (augmentation-only pairs)
    same_patient_any,  // any slice of any volume of the same patient
    inter_slice_only,  // neighbouring slice only
};

std::string_view to_string(PairPolicyKind k) noexcept;
PairPolicyKind parse_pair_policy(std::string_view name);

struct PairPolicy {
    PairPolicyKind kind = PairPolicyKind::sift;
    double view_prob = 0.5;
    int k = 9;

    void validate() const;
};

enum class PairKind { same_slice, inter_slice, inter_view };
std::string_view to_string(PairKind k) noexcept;

struct PairSample {
    SliceRef anchor;
    SliceRef positive;
    PairKind pair_kind = PairKind::same_slice;
};

/// Per-kind tallies, indexed by PairKind.
using PairKindCounts = std::array<std::size_t, 3>;

/// Draws positives for anchors of one manifest. Holds only lookup tables; the
/// caller owns the generator, so one sampler can serve many workers.
class PairSampler {
public:
    PairSampler(const StudyManifest& manifest, PairPolicy policy);

    [[nodiscard]] PairSample sample(SliceRef anchor, Rng& rng) const;

    /// Index of the other view of the same study and side, if present.
    [[nodiscard]] std::optional<std::size_t> other_view(std::size_t volume) const;
    [[nodiscard]] const PairPolicy& policy() const noexcept { return policy_; }

private:
    [[nodiscard]] PairSample neighbour(SliceRef anchor, Rng& rng) const;

    const StudyManifest* manifest_;
    PairPolicy policy_;
    std::vector<std::optional<std::size_t>> other_view_;
    std::map<std::string, std::vector<std::size_t>> patient_volumes_;
};

PairSample sample_positive(SliceRef anchor, const StudyManifest& manifest, const PairPolicy& policy, Rng& rng);

/// True unless the candidate is positive-eligible under the metadata policy: same
/// volume, or the other view of the same study and side.
bool is_negative(SliceRef anchor, SliceRef candidate, const StudyManifest& manifest);

struct AugmentParams {
    double crop_scale_min = 0.6;
    double crop_scale_max = 1.0;
    double jitter_strength = 0.2;
    double flip_prob = 0.5;
    double blur_prob = 0.5;
    int output_size = 224;

    void validate() const;
};

Image flip_horizontal(const Image& image);
Image gaussian_blur(const Image& image, double sigma);

/// Random resized crop -> horizontal flip -> brightness/contrast jitter -> Gaussian blur.
/// Output is output_size x output_size.
Image augment(const Image& image, const AugmentParams& params, Rng& rng);

}  // namespace sift
