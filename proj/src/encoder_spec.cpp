#include "sift/encoder_spec.hpp"

#include <string>

#include "sift/error.hpp"

namespace sift {

std::string_view to_string(BackboneKind k) noexcept { return k == BackboneKind::small_cnn ? "small_cnn" : "residual"; }

BackboneKind parse_backbone(std::string_view name) {
    if (name == "small_cnn") return BackboneKind::small_cnn;
    if (name == "residual") return BackboneKind::residual;
    throw ConfigError("unknown backbone '" + std::string(name) + "'");
}

void EncoderSpec::validate() const {
    if (n_blocks < 2) throw ConfigError("encoder: n_blocks must be >= 2");
    if (n_blocks != expected_blocks(kind))
        throw ConfigError("encoder: " + std::string(to_string(kind)) + " has " + std::to_string(expected_blocks(kind)) +
                          " blocks, spec asks for " + std::to_string(n_blocks));
    if (embedding_dim < 8) throw ConfigError("encoder: embedding_dim must be >= 8");
    if (input_height < 8 || input_width < 8) throw ConfigError("encoder: input must be at least 8x8");
    if (width < 4 || width % 4 != 0) throw ConfigError("encoder: width must be a positive multiple of 4");
    if (blocks_per_stage < 1) throw ConfigError("encoder: blocks_per_stage must be >= 1");
}

}  // namespace sift
