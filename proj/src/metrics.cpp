// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "visii/errors.hpp"
#include "visii/io.hpp"

namespace visii {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double norm2(const Eigen::VectorXf& v) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        sum += static_cast<double>(v[i]) * v[i];
    }
    return sum;
}

}  // namespace

Similarity delta_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
    if (norm2(a) == 0.0 || norm2(b) == 0.0) {
        return {0.0, true};
    }
    return {clamp_unit(cosine_similarity(a, b)), false};
}

Similarity directional_similarity(const ClipVector& before, const ClipVector& after, const ClipVector& before_text,
                                  const ClipVector& after_text) {
    const Eigen::VectorXf text_delta = after_text.values - before_text.values;
    VISII_CHECK(norm2(text_delta) > 0.0, ErrorCode::degenerate, "captions embed identically; text delta is zero");
    return delta_similarity(after.values - before.values, text_delta);
}

ClipVector embed_caption(const Backend& backend, std::string_view caption) {
    return backend.embed_instruction_text(init_from_text(backend, caption));
}

double image_clip_similarity(const Backend& backend, const Image& input, const Image& edited) {
    return clamp_unit(cosine_similarity(backend.embed_image(input).values, backend.embed_image(edited).values));
}

Similarity directional_clip_similarity(const Backend& backend, const Image& before, const Image& after,
                                       std::string_view before_caption, std::string_view after_caption) {
    VISII_CHECK(!before_caption.empty() && !after_caption.empty(), ErrorCode::invalid_argument,
                "directional similarity needs both captions");
    return directional_similarity(backend.embed_image(before), backend.embed_image(after),
                                  embed_caption(backend, before_caption), embed_caption(backend, after_caption));
}

Similarity visual_clip_similarity(const Backend& backend, const TrainingPair& example, const TrainingPair& test) {
    const Eigen::VectorXf a = backend.embed_image(example.after).values - backend.embed_image(example.before).values;
    const Eigen::VectorXf b = backend.embed_image(test.after).values - backend.embed_image(test.before).values;
    return delta_similarity(a, b);
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    nlohmann::json json;
    try {
        json = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::format, "manifest ", path.string(), ": ", e.what());
    }
    VISII_CHECK(json.is_array(), ErrorCode::format, "manifest must be a JSON array");
    VISII_CHECK(!json.empty(), ErrorCode::format, "manifest has no directions");
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path candidate(p);
        return candidate.is_absolute() ? candidate : base / candidate;
    };
    auto read_pairs = [&](const nlohmann::json& entry, const char* key) {
        std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;
        const auto& list = entry.at(key);
        VISII_CHECK(list.is_array(), ErrorCode::format, "'", key, "' must be an array");
        for (const auto& pair : list) {
            VISII_CHECK(pair.is_array() && pair.size() == 2, ErrorCode::format, "'", key,
                        "' entries must be [before, after]");
            pairs.emplace_back(resolve(pair[0].get<std::string>()), resolve(pair[1].get<std::string>()));
        }
        return pairs;
    };

    std::vector<ManifestEntry> manifest;
    try {
        for (const auto& entry : json) {
            VISII_CHECK(entry.is_object(), ErrorCode::format, "manifest entries must be objects");
            ManifestEntry e;
            const auto& id = entry.at("direction_id");
            e.direction_id = id.is_string() ? id.get<std::string>() : id.dump();
            e.examples = read_pairs(entry, "examples");
            e.tests = read_pairs(entry, "tests");
            VISII_CHECK(!e.examples.empty(), ErrorCode::format, "direction '", e.direction_id, "' has no examples");
            if (entry.contains("before_caption") && !entry["before_caption"].is_null()) {
                e.before_caption = entry["before_caption"].get<std::string>();
            }
            if (entry.contains("after_caption") && !entry["after_caption"].is_null()) {
                e.after_caption = entry["after_caption"].get<std::string>();
            }
            manifest.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format, "manifest ", path.string(), ": ", e.what());
    }
    return manifest;
}

std::vector<EvalRecord> evaluate_records(const Backend& backend, const std::vector<ManifestEntry>& manifest,
                                         int shard_index, int shard_count) {
    VISII_CHECK(shard_count >= 1 && shard_index >= 0 && shard_index < shard_count, ErrorCode::invalid_argument,
                "invalid shard ", shard_index, "/", shard_count);
    std::map<std::string, ClipVector> cache;
    auto embed = [&](const std::filesystem::path& p) -> const ClipVector& {
        auto it = cache.find(p.string());
        if (it == cache.end()) {
            it = cache.emplace(p.string(), backend.embed_image(load_png(p))).first;
        }
        return it->second;
    };

    std::vector<EvalRecord> records;
    std::size_t order = 0;
    for (const auto& entry : manifest) {
        for (std::size_t test = 0; test < entry.tests.size(); ++test, ++order) {
            if (static_cast<int>(order % static_cast<std::size_t>(shard_count)) != shard_index) {
                continue;
            }
            EvalRecord record;
            record.order = order;
            record.direction_id = entry.direction_id;
            record.test_id = static_cast<int>(test);
            try {
                const auto& before = embed(entry.tests[test].first);
                const auto& after = embed(entry.tests[test].second);
                Eigen::VectorXd example = Eigen::VectorXd::Zero(before.values.size());
                for (const auto& [b, a] : entry.examples) {
                    example += (embed(a).values - embed(b).values).cast<double>();
                }
                example /= static_cast<double>(entry.examples.size());

                bool degenerate = false;
                record.image_sim = clamp_unit(cosine_similarity(before.values, after.values));
                const auto visual = delta_similarity(example.cast<float>(), after.values - before.values);
                record.visual_sim = visual.value;
                degenerate |= visual.degenerate;

                std::string failure;
                if (!entry.before_caption || !entry.after_caption || entry.before_caption->empty() ||
                    entry.after_caption->empty()) {
                    failure = "missing captions";
                } else {
                    try {
                        const auto directional =
                            directional_similarity(before, after, embed_caption(backend, *entry.before_caption),
                                                   embed_caption(backend, *entry.after_caption));
                        record.directional_sim = directional.value;
                        degenerate |= directional.degenerate;
                    } catch (const Error& e) {
                        failure = e.what();
                    }
                }
                record.status = !failure.empty() ? "failed: " + failure : degenerate ? "degenerate" : "ok";
            } catch (const Error& e) {
                record.image_sim.reset();
                record.visual_sim.reset();
                record.directional_sim.reset();
                record.status = std::string("failed: ") + e.what();
            }
            records.push_back(std::move(record));
        }
    }
    return records;
}

namespace {

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) {
        return text;
    }
    std::string quoted = "\"";
    for (char c : text) {
        quoted += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
    }
    return quoted + "\"";
}

std::string number(const std::optional<double>& v) {
    if (!v) {
        return "";
    }
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.9g", *v);
    return buffer;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> optional_from(const nlohmann::json& v) {
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
}

}  // namespace

std::string records_csv(const std::vector<EvalRecord>& records) {
    std::string csv = "direction_id,test_id,image_sim,directional_sim,visual_sim,status\n";
    for (const auto& r : records) {
        csv += csv_field(r.direction_id) + "," + std::to_string(r.test_id) + "," + number(r.image_sim) + "," +
               number(r.directional_sim) + "," + number(r.visual_sim) + "," + csv_field(r.status) + "\n";
    }
    return csv;
}

nlohmann::json records_to_json(const std::vector<EvalRecord>& records) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : records) {
        out.push_back({{"order", r.order},
                       {"direction_id", r.direction_id},
                       {"test_id", r.test_id},
                       {"image_sim", optional_json(r.image_sim)},
                       {"directional_sim", optional_json(r.directional_sim)},
                       {"visual_sim", optional_json(r.visual_sim)},
                       {"status", r.status}});
    }
    return out;
}

std::vector<EvalRecord> records_from_json(const nlohmann::json& json) {
    std::vector<EvalRecord> records;
    try {
        for (const auto& item : json) {
            EvalRecord r;
            r.order = item.at("order").get<std::size_t>();
            r.direction_id = item.at("direction_id").get<std::string>();
            r.test_id = item.at("test_id").get<int>();
            r.image_sim = optional_from(item.at("image_sim"));
            r.directional_sim = optional_from(item.at("directional_sim"));
            r.visual_sim = optional_from(item.at("visual_sim"));
            r.status = item.at("status").get<std::string>();
            records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format, "malformed evaluation records: ", e.what());
    }
    return records;
}

nlohmann::json histogram_json(const std::vector<EvalRecord>& records, int bins) {
    VISII_CHECK(bins >= 1, ErrorCode::invalid_argument, "histogram needs at least one bin");
    nlohmann::json out = {{"records", records.size()}, {"bins", bins}};
    const std::pair<const char*, std::optional<double> EvalRecord::*> scores[] = {
        {"image_sim", &EvalRecord::image_sim},
        {"directional_sim", &EvalRecord::directional_sim},
        {"visual_sim", &EvalRecord::visual_sim},
    };
    for (const auto& [name, member] : scores) {
        std::vector<double> values;
        for (const auto& r : records) {
            if (r.*member) {
                values.push_back(*(r.*member));
            }
        }
        nlohmann::json entry = {{"count", values.size()}};
        std::vector<int> counts(static_cast<std::size_t>(bins), 0);
        if (values.empty()) {
            entry["mean"] = nullptr;
            entry["min"] = nullptr;
            entry["max"] = nullptr;
        } else {
            const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
            const double min = *lo;
            const double max = *hi;
            double sum = 0.0;
            for (double v : values) {
                sum += v;
                int bin = 0;
                if (max > min) {
                    bin = std::min(bins - 1, static_cast<int>(std::floor((v - min) / (max - min) * bins)));
                }
                ++counts[static_cast<std::size_t>(bin)];
            }
            entry["mean"] = sum / static_cast<double>(values.size());
            entry["min"] = min;
            entry["max"] = max;
        }
        entry["counts"] = counts;
        out[name] = std::move(entry);
    }
    return out;
}

void write_eval_outputs(const std::vector<EvalRecord>& records, const std::filesystem::path& out_dir) {
    write_file_atomic(out_dir / "results.csv", records_csv(records));
    write_file_atomic(out_dir / "histogram.json", histogram_json(records).dump(2) + "\n");
}

std::vector<EvalRecord> evaluate_dataset(const Backend& backend, const std::filesystem::path& manifest_path,
                                         const std::filesystem::path& out_dir) {
    const auto records = evaluate_records(backend, load_manifest(manifest_path));
    write_eval_outputs(records, out_dir);
    return records;
}

}  // namespace visii
