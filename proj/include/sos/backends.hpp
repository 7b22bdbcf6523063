#pragma once

// Backend construction from configuration.
//
// Oracle fixture file:
//   {"masks_per_prompt": 3,
//    "images": [{"image_id": 1, "labels": "labels/1.png",
//                "scores": {"7": 0.95}, "parents": {"7": 3}}]}
// Label paths are relative to the fixture file. Region ids without a score get 1.0.

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "sos/bridge.hpp"
#include "sos/coco_io.hpp"
#include "sos/error.hpp"
#include "sos/image_io.hpp"
#include "sos/pipeline.hpp"
#include "sos/segmenter.hpp"

namespace sos {

namespace detail {

inline int region_key(const std::string& key, const std::string& where) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(key, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != key.size()) throw ParseError(where + ": region key \"" + key + "\" is not an integer");
    return v;
}

}  // namespace detail

inline OracleDatasetBackend load_oracle_fixture(const std::filesystem::path& path) {
    const auto doc = io::read_json_file(path);
    const auto base = path.parent_path();
    const std::string name = path.string();
    if (!doc.is_object()) throw ParseError(name + ": expected an object");
    int m = 3;
    if (const auto it = doc.find("masks_per_prompt"); it != doc.end()) {
        if (!it->is_number_integer()) throw ParseError(name + ": masks_per_prompt must be an integer");
        m = it->get<int>();
    }
    OracleDatasetBackend backend(m);
    const auto it = doc.find("images");
    if (it == doc.end() || !it->is_array()) throw ParseError(name + ": missing images array");
    for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string where = name + ": $.images[" + std::to_string(i) + "]";
        const auto& e = (*it)[i];
        if (!e.is_object() || !e.contains("image_id") || !e["image_id"].is_number_integer() || !e.contains("labels") ||
            !e["labels"].is_string())
            throw ParseError(where + ": needs integer image_id and labels path");
        auto labels = io::read_labels(base / e["labels"].get<std::string>());
        std::map<int, double> scores;
        std::map<int, int> parents;
        if (const auto s = e.find("scores"); s != e.end()) {
            if (!s->is_object()) throw ParseError(where + ".scores: expected an object");
            for (const auto& [k, v] : s->items()) {
                if (!v.is_number()) throw ParseError(where + ".scores." + k + ": expected a number");
                scores[detail::region_key(k, where)] = v.get<double>();
            }
        }
        if (const auto p = e.find("parents"); p != e.end()) {
            if (!p->is_object()) throw ParseError(where + ".parents: expected an object");
            for (const auto& [k, v] : p->items()) {
                if (!v.is_number_integer()) throw ParseError(where + ".parents." + k + ": expected an integer");
                parents[detail::region_key(k, where)] = v.get<int>();
            }
        }
        try {
            backend.add(e["image_id"].get<ImageId>(),
                         std::make_shared<OracleBackend>(std::move(labels), std::move(scores), std::move(parents), m));
        } catch (const PreconditionError& err) {
            throw ParseError(where + ": " + err.what());
        }
    }
    return backend;
}

inline std::unique_ptr<SegmenterBackend> make_backend(const BackendConfig& cfg) {
    const RetryPolicy retry{cfg.retries, cfg.backoff_ms};
    if (cfg.kind == "oracle") {
        if (cfg.path.empty()) throw ConfigError("oracle backend needs backend.path");
        return std::make_unique<OracleDatasetBackend>(load_oracle_fixture(cfg.path));
    }
    std::unique_ptr<Channel> channel;
    if (cfg.kind == "bridge") {
        if (cfg.endpoint.empty()) throw ConfigError("bridge backend needs backend.endpoint");
        channel = open_endpoint(cfg.endpoint, cfg.timeout_ms);
    } else if (cfg.kind == "replay") {
        if (cfg.path.empty()) throw ConfigError("replay backend needs backend.path");
        channel = std::make_unique<ReplayChannel>(cfg.path);
    } else {
        throw ConfigError("unknown backend kind \"" + cfg.kind + "\"");
    }
    if (!cfg.record.empty()) channel = std::make_unique<RecordingChannel>(std::move(channel), cfg.record);
    return std::make_unique<BridgeBackend>(std::move(channel), retry, cfg.masks_per_prompt);
}

}  // namespace sos
