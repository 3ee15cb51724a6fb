#pragma once

#include "statgeo/core.hpp"
#include "statgeo/decoder.hpp"
#include "statgeo/land.hpp"
#include "statgeo/metric.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace statgeo {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j);
/// Nested row arrays.
Json matrix_to_json(const Mat& m);
Mat matrix_from_json(const Json& j);

/// Decoder file: {latent_dim, feature_count, family, heads, regularization?, seed?}.
/// Layer weights are stored as row-major flat arrays with explicit rows / cols.
Json decoder_to_json(const DecoderMap& dec, std::optional<std::uint64_t> seed = std::nullopt);
DecoderMap decoder_from_json(const Json& j);
DecoderMap load_decoder(const std::string& path);
void save_decoder(const std::string& path, const DecoderMap& dec, std::optional<std::uint64_t> seed = std::nullopt);

/// Latent codes CSV with header z0,z1,...; one row per code.
std::string codes_to_csv(const Mat& codes);
Mat codes_from_csv(const std::string& text);
Mat load_codes(const std::string& path);
void save_codes(const std::string& path, const Mat& codes);

/// Grid JSON: {lower, upper, resolution, bandwidth, points, tensors, log_sqrt_det}.
Json grid_to_json(const MetricGrid& grid);
MetricGrid grid_from_json(const Json& j);

/// LAND JSON: {mean, precision, norm_const, norm_std_error, seed, metric_ref}.
Json land_to_json(const LandModel& model, const std::string& metric_ref);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
Json parse_json(const std::string& text);
/// Two-space indented JSON with a trailing newline.
std::string dump_json(const Json& j);

}  // namespace statgeo
