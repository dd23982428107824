#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include "sift/dataset.hpp"
#include "sift/image.hpp"

namespace sift {

/// Lazily loads each volume of a manifest once; safe to share across threads.
class VolumeCache {
public:
    explicit VolumeCache(const StudyManifest& manifest);

    [[nodiscard]] const Volume& volume(std::size_t index) const;
    [[nodiscard]] const Image& slice(SliceRef ref) const { return volume(ref.volume).at(ref.slice_index); }
    [[nodiscard]] const StudyManifest& manifest() const noexcept { return *manifest_; }

    void preload(int workers) const;

private:
    struct Slot {
        std::once_flag once;
        Volume volume;
    };
    const StudyManifest* manifest_;
    std::unique_ptr<Slot[]> slots_;
};

}  // namespace sift
