#include "sift/volume_cache.hpp"

#include "sift/error.hpp"
#include "sift/parallel.hpp"

namespace sift {

VolumeCache::VolumeCache(const StudyManifest& manifest)
    : manifest_(&manifest), slots_(std::make_unique<Slot[]>(manifest.entries.size())) {}

const Volume& VolumeCache::volume(std::size_t index) const {
    if (index >= manifest_->entries.size()) throw Error("volume index out of range");
    Slot& slot = slots_[index];
    std::call_once(slot.once, [&] {
        const auto& record = manifest_->entries[index];
        slot.volume = read_volume(manifest_->volume_dir(record), record.n_slices);
    });
    return slot.volume;
}

void VolumeCache::preload(int workers) const {
    parallel_for(manifest_->entries.size(), workers, [&](std::size_t i) { (void)volume(i); });
}

}  // namespace sift
