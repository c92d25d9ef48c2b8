// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "visii/backend.hpp"
#include "visii/inversion.hpp"

namespace visii {

/// A score in [-1, 1]. `degenerate` marks the zero-image-delta convention
/// (value 0) instead of an error.
struct Similarity {
    double value = 0.0;
    bool degenerate = false;
};

/// cos(E(input), E(edited)).
double image_clip_similarity(const Backend& backend, const Image& input, const Image& edited);

/// cos(E(after) - E(before), T(after_caption) - T(before_caption)) over
/// normalized embeddings. Throws `degenerate` when the caption embeddings coincide.
Similarity directional_clip_similarity(const Backend& backend, const Image& before, const Image& after,
                                       std::string_view before_caption, std::string_view after_caption);

/// cos(delta(example), delta(test)).
Similarity visual_clip_similarity(const Backend& backend, const TrainingPair& example, const TrainingPair& test);

/// Embedding-level forms of the scores above.
Similarity directional_similarity(const ClipVector& before, const ClipVector& after, const ClipVector& before_text,
                                  const ClipVector& after_text);
Similarity delta_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

/// Joint-space embedding of a caption, through the same path as learned instructions.
ClipVector embed_caption(const Backend& backend, std::string_view caption);

struct ManifestEntry {
    std::string direction_id;
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> examples;
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> tests;
    std::optional<std::string> before_caption;
    std::optional<std::string> after_caption;
};

/// JSON array of {direction_id, examples: [[before, after], ...], tests: [...],
/// before_caption, after_caption}; relative paths resolve against the manifest
/// directory. Throws `format` on malformed input or an empty array.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct EvalRecord {
    /// Position in manifest order; shards are merged on it.
    std::size_t order = 0;
    std::string direction_id;
    int test_id = 0;
    std::optional<double> image_sim;
    std::optional<double> directional_sim;
    std::optional<double> visual_sim;
    /// "ok", "degenerate", or "failed: <reason>".
    std::string status;
};

/// Scores every test pair whose manifest position is congruent to shard_index modulo shard_count.
std::vector<EvalRecord> evaluate_records(const Backend& backend, const std::vector<ManifestEntry>& manifest,
                                         int shard_index = 0, int shard_count = 1);

std::string records_csv(const std::vector<EvalRecord>& records);
nlohmann::json records_to_json(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_json(const nlohmann::json& json);

inline constexpr int kHistogramBins = 20;

/// Per score: count, mean, min, max and bin counts over the observed range.
nlohmann::json histogram_json(const std::vector<EvalRecord>& records, int bins = kHistogramBins);

/// Writes results.csv and histogram.json under `out_dir`.
void write_eval_outputs(const std::vector<EvalRecord>& records, const std::filesystem::path& out_dir);

/// Single-process harness: load, score, write. Returns the records in manifest order.
std::vector<EvalRecord> evaluate_dataset(const Backend& backend, const std::filesystem::path& manifest_path,
                                         const std::filesystem::path& out_dir);

}  // namespace visii
