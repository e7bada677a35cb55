// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/checkpoint.hpp"

#include "byte_io.hpp"

namespace vtclip {

namespace {

constexpr std::string_view kMagic = "VTPM";
constexpr std::uint64_t kMaxWidth = std::uint64_t{1} << 16;
constexpr std::uint64_t kMaxLayers = 1024;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const VTParams& params) {
    detail::ByteWriter w;
    w.magic(kMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.dim));
    w.u32(static_cast<std::uint32_t>(params.spatial_dim));
    w.u32(static_cast<std::uint32_t>(params.heads));
    w.u32(static_cast<std::uint32_t>(params.num_layers()));
    for_each_tensor(params, [&](const std::string&, std::span<const double> t) {
        for (double v : t) {
            w.f32(static_cast<float>(v));
        }
    });
    return std::move(w.bytes());
}

VTParams decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "VTPM");
    r.expect_magic(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "VTPM: unsupported version " + std::to_string(version));
    }
    const std::uint32_t dim = r.u32();
    const std::uint32_t spatial_dim = r.u32();
    const std::uint32_t heads = r.u32();
    const std::uint32_t layers = r.u32();
    if (dim > kMaxWidth || spatial_dim > kMaxWidth || heads > kMaxWidth || layers > kMaxLayers) {
        throw FormatError(FormatErrorKind::DimensionOverflow,
                          "VTPM: header dimensions exceed supported limits");
    }
    VTParams params;
    try {
        params = init_params(dim, spatial_dim, heads, layers, 0);
    } catch (const ConfigError& e) {
        throw FormatError(FormatErrorKind::InvalidContent, std::string("VTPM: ") + e.what());
    }
    r.need(4 * static_cast<std::uint64_t>(params.parameter_count()));
    for_each_tensor(params, [&](const std::string&, std::span<double> t) {
        for (auto& v : t) {
            v = static_cast<double>(r.f32());
        }
    });
    r.expect_end();
    return params;
}

void write_checkpoint(const VTParams& params, const std::filesystem::path& path) {
    detail::write_file(path, encode_checkpoint(params));
}

VTParams read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path));
}

}  // namespace vtclip
