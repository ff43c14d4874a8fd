#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marca/dataset.hpp"
#include "marca/synthbench.hpp"
#include "marca/trainer.hpp"

/// On-disk formats: the binary/CSV matrix container, the JSON manifest, the
/// model bundle directory and the synthetic ground-truth directory.
namespace marca::io {

namespace fs = std::filesystem;

/// Binary container: "MARC", version byte 0x01, rows and cols as u64 LE,
/// then rows*cols f64 LE values in row-major order.
inline constexpr std::string_view kMatrixMagic = "MARC";
inline constexpr unsigned char kMatrixVersion = 0x01;

std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(std::string_view bytes);

/// One matrix row per line, comma separated, values printed to round-trip.
std::string encode_csv(const Matrix& m);
Matrix decode_csv(std::string_view text);

/// Dispatches on extension: ".csv" is text, anything else binary.
void write_matrix(const fs::path& path, const Matrix& m);
Matrix read_matrix(const fs::path& path);

/// Accepts n x 1 or 1 x n files.
Vector read_vector(const fs::path& path);
void write_vector(const fs::path& path, const Vector& v);

/// read_matrix() plus the {0, 1} check.
Matrix read_mask(const fs::path& path);

struct ManifestSample {
  fs::path data;
  std::optional<fs::path> mask;  ///< absent: fully visible
  std::map<std::string, std::string> labels;
};

struct Manifest {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  AttributeSchema schema;
  std::vector<ManifestSample> samples;
};

/// Parses and validates labels against the schema. Relative paths are kept
/// as written.
Manifest parse_manifest(std::string_view json_text);
std::string dump_manifest(const Manifest& manifest);

Manifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const Manifest& manifest);

/// Reads every referenced matrix (relative to the manifest's directory) and
/// assembles the training set.
TrainingSet load_training_set(const fs::path& manifest_path);

std::string dump_schema(const AttributeSchema& schema);
AttributeSchema parse_schema(std::string_view json_text);

/// Bundle directory: schema.json, basis_<i>.marc, selectors.marc, G.marc,
/// E.marc, diagnostics.json, config.json and optionally span.json + K.marc.
void save_bundle(const fs::path& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const fs::path& dir);

/// Truth directory written by the synth command.
void save_truth(const fs::path& dir, const synth::GroundTruth& truth);
synth::GroundTruth load_truth(const fs::path& dir);

std::string metrics_json(const synth::MetricsReport& report);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

}  // namespace marca::io
