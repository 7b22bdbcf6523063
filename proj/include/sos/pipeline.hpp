#pragma once

// End-to-end annotation pipeline: prior -> prompts -> segments -> pseudo annotations -> merge.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sos/annotations.hpp"
#include "sos/error.hpp"
#include "sos/eval.hpp"
#include "sos/image.hpp"
#include "sos/image_io.hpp"
#include "sos/pac.hpp"
#include "sos/prior.hpp"
#include "sos/prior_map_io.hpp"
#include "sos/sampler.hpp"
#include "sos/segmenter.hpp"
#include "sos/superpixel.hpp"

namespace sos {

inline constexpr const char* kPipelineName = "sos-pipeline";
inline constexpr const char* kPipelineVersion = "1.0.0";

enum class PriorKind { grid, dist, spx, contour, saliency, external, attention, gt_centroid };

inline const std::vector<std::pair<PriorKind, std::string>>& prior_kind_names() {
    static const std::vector<std::pair<PriorKind, std::string>> names{
        {PriorKind::grid, "grid"},         {PriorKind::dist, "dist"},         {PriorKind::spx, "spx"},
        {PriorKind::contour, "contour"},   {PriorKind::saliency, "saliency"}, {PriorKind::external, "external"},
        {PriorKind::attention, "attention"}, {PriorKind::gt_centroid, "gt-centroid"}};
    return names;
}

inline std::string to_string(PriorKind k) {
    for (const auto& [kind, name] : prior_kind_names())
        if (kind == k) return name;
    return "unknown";
}

inline PriorKind parse_prior_kind(const std::string& s) {
    for (const auto& [kind, name] : prior_kind_names())
        if (name == s) return kind;
    throw ConfigError("unknown prior kind \"" + s + "\"");
}

/// Grid, superpixel and gt-centroid priors yield prompts directly; the rest are sampled.
inline bool bypasses_sampler(PriorKind k) {
    return k == PriorKind::grid || k == PriorKind::spx || k == PriorKind::gt_centroid;
}

struct PriorConfig {
    PriorKind kind = PriorKind::saliency;
    int grid_n = 64;
    int contour_window = 15;
    SaliencyParams saliency;
    SuperpixelParams spx;
    /// Dist smoothing in pixels; 2% of the image diagonal when unset.
    std::optional<double> dist_sigma;
    /// External prior maps: <prior_dir>/<file stem>.oprior
    std::string prior_dir;
};

struct BackendConfig {
    std::string kind = "oracle";  // oracle | bridge | replay
    std::string path;             // oracle fixture or replay file
    std::string endpoint;         // unix:<path> or exec:<command>
    std::string record;           // optional replay file to tee bridge exchanges into
    int masks_per_prompt = 3;
    int retries = 3;
    int backoff_ms = 100;
    int timeout_ms = 60000;
};

struct PathsConfig {
    std::string annotations;
    std::string images;
    std::string gt;
    std::string output;
    std::string log;
};

struct PipelineConfig {
    PriorConfig prior;
    SamplerConfig sampler;
    PacConfig pac;
    BackendConfig backend;
    PathsConfig paths;
    int workers = 1;
    /// Percentage of images allowed to fail before the run counts as failed.
    double max_failure_percent = 1.0;

    void validate() const {
        try {
            sampler.validate();
            prior.spx.validate();
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
        }
        pac.validate();
        if (prior.grid_n < 1) throw ConfigError("prior.grid_n must be >= 1");
        if (prior.contour_window < 1) throw ConfigError("prior.contour_window must be >= 1");
        if (!(prior.saliency.center_sigma > 0.0 && prior.saliency.surround_sigma > prior.saliency.center_sigma))
            throw ConfigError("saliency needs surround_sigma > center_sigma > 0");
        if (prior.dist_sigma && !(*prior.dist_sigma >= 0.0)) throw ConfigError("prior.dist_sigma must be >= 0");
        if (workers < 1) throw ConfigError("workers must be >= 1");
        if (!(max_failure_percent >= 0.0 && max_failure_percent <= 100.0))
            throw ConfigError("max_failure_percent must lie in [0, 100]");
        if (backend.masks_per_prompt < 1) throw ConfigError("backend.masks_per_prompt must be >= 1");
        if (backend.retries < 0 || backend.backoff_ms < 0 || backend.timeout_ms < 1)
            throw ConfigError("backend retry settings out of range");
    }
};

namespace detail {

using nlohmann::json;

/// Reads known keys from `obj` into fields; unknown keys are config errors.
class ConfigReader {
public:
    ConfigReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
    }
    ~ConfigReader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, _] : obj_.items())
            if (!seen_.contains(k)) throw ConfigError(where_ + ": unknown key \"" + k + "\"");
    }
    ConfigReader(const ConfigReader&) = delete;
    ConfigReader& operator=(const ConfigReader&) = delete;

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() || it->is_null() ? nullptr : &*it;
    }
    template <typename T>
    void get(const std::string& key, T& out) {
        if (const json* v = find(key)) {
            try {
                if constexpr (std::is_same_v<T, std::string>) {
                    if (!v->is_string()) throw ConfigError("");
                } else if constexpr (std::is_integral_v<T>) {
                    if (!v->is_number_integer()) throw ConfigError("");
                } else if constexpr (std::is_floating_point_v<T>) {
                    if (!v->is_number()) throw ConfigError("");
                }
                out = v->get<T>();
            } catch (const std::exception&) {
                throw ConfigError(where_ + "." + key + ": wrong type");
            }
        }
    }
    template <typename T>
    void get(const std::string& key, std::optional<T>& out) {
        if (find(key)) {
            T v{};
            get(key, v);
            out = v;
        }
    }
    std::string sub(const std::string& key) const { return where_ + "." + key; }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Applies a JSON config document on top of `cfg`. Unknown keys are rejected.
inline void apply_config_json(PipelineConfig& cfg, const nlohmann::json& doc) {
    detail::ConfigReader top(doc, "$");
    if (const auto* p = top.find("prior")) {
        detail::ConfigReader r(*p, "$.prior");
        std::string kind = to_string(cfg.prior.kind);
        r.get("kind", kind);
        cfg.prior.kind = parse_prior_kind(kind);
        r.get("grid_n", cfg.prior.grid_n);
        r.get("contour_window", cfg.prior.contour_window);
        r.get("center_sigma", cfg.prior.saliency.center_sigma);
        r.get("surround_sigma", cfg.prior.saliency.surround_sigma);
        r.get("dist_sigma", cfg.prior.dist_sigma);
        r.get("prior_dir", cfg.prior.prior_dir);
        if (const auto* s = r.find("spx")) {
            detail::ConfigReader sr(*s, "$.prior.spx");
            sr.get("k", cfg.prior.spx.k);
            sr.get("sigma", cfg.prior.spx.sigma);
            sr.get("min_size", cfg.prior.spx.min_size);
        }
    }
    if (const auto* s = top.find("sampler")) {
        detail::ConfigReader r(*s, "$.sampler");
        r.get("S", cfg.sampler.S);
        r.get("N", cfg.sampler.N);
        r.get("seed", cfg.sampler.seed);
    }
    if (const auto* s = top.find("pac")) {
        detail::ConfigReader r(*s, "$.pac");
        r.get("tau_conf", cfg.pac.tau_conf);
        r.get("tau_nms", cfg.pac.tau_nms);
        r.get("tau_gt", cfg.pac.tau_gt);
        r.get("P", cfg.pac.P);
    }
    if (const auto* s = top.find("backend")) {
        detail::ConfigReader r(*s, "$.backend");
        r.get("kind", cfg.backend.kind);
        r.get("path", cfg.backend.path);
        r.get("endpoint", cfg.backend.endpoint);
        r.get("record", cfg.backend.record);
        r.get("masks_per_prompt", cfg.backend.masks_per_prompt);
        r.get("retries", cfg.backend.retries);
        r.get("backoff_ms", cfg.backend.backoff_ms);
        r.get("timeout_ms", cfg.backend.timeout_ms);
    }
    if (const auto* s = top.find("paths")) {
        detail::ConfigReader r(*s, "$.paths");
        r.get("annotations", cfg.paths.annotations);
        r.get("images", cfg.paths.images);
        r.get("gt", cfg.paths.gt);
        r.get("output", cfg.paths.output);
        r.get("log", cfg.paths.log);
    }
    top.get("workers", cfg.workers);
    top.get("max_failure_percent", cfg.max_failure_percent);
}

/// Settings that determine output content. Worker count and output/log paths are excluded.
inline nlohmann::json effective_config(const PipelineConfig& cfg) {
    using nlohmann::json;
    json prior{{"kind", to_string(cfg.prior.kind)}};
    switch (cfg.prior.kind) {
        case PriorKind::grid: prior["grid_n"] = cfg.prior.grid_n; break;
        case PriorKind::contour: prior["contour_window"] = cfg.prior.contour_window; break;
        case PriorKind::saliency:
            prior["center_sigma"] = cfg.prior.saliency.center_sigma;
            prior["surround_sigma"] = cfg.prior.saliency.surround_sigma;
            break;
        case PriorKind::spx:
            prior["spx"] = {{"k", cfg.prior.spx.k}, {"sigma", cfg.prior.spx.sigma}, {"min_size", cfg.prior.spx.min_size}};
            break;
        case PriorKind::dist: prior["dist_sigma"] = cfg.prior.dist_sigma ? json(*cfg.prior.dist_sigma) : json(); break;
        case PriorKind::external: prior["prior_dir"] = cfg.prior.prior_dir; break;
        case PriorKind::attention:
        case PriorKind::gt_centroid: break;
    }
    json sampler = bypasses_sampler(cfg.prior.kind)
                       ? json()
                       : json{{"S", cfg.sampler.S}, {"N", cfg.sampler.N}, {"seed", cfg.sampler.seed}};
    return {{"prior", prior},
            {"sampler", sampler},
            {"pac",
             {{"tau_conf", cfg.pac.tau_conf},
              {"tau_nms", cfg.pac.tau_nms},
              {"tau_gt", cfg.pac.gt_threshold()},
              {"P", cfg.pac.P}}},
            {"backend",
             {{"kind", cfg.backend.kind},
              {"path", cfg.backend.path},
              {"endpoint", cfg.backend.endpoint},
              {"masks_per_prompt", cfg.backend.masks_per_prompt}}},
            {"inputs", {{"annotations", cfg.paths.annotations}, {"images", cfg.paths.images}, {"gt", cfg.paths.gt}}}};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline nlohmann::json provenance(const PipelineConfig& cfg) {
    const auto eff = effective_config(cfg);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(eff.dump())));
    return {{"pipeline", kPipelineName}, {"version", kPipelineVersion}, {"config_hash", hex}, {"config", eff}};
}

/// Where pixels and external prior maps come from.
struct PipelineSources {
    std::function<RgbImage(ImageId, const ImageInfo&)> image;
    std::function<RealGrid(ImageId, const ImageInfo&)> external_prior;
    std::function<std::string(ImageId, const ImageInfo&)> image_path;
};

inline PipelineSources disk_sources(const PipelineConfig& cfg) {
    const std::filesystem::path images = cfg.paths.images;
    const std::filesystem::path priors = cfg.prior.prior_dir;
    PipelineSources src;
    src.image_path = [images](ImageId, const ImageInfo& info) { return (images / info.file_name).string(); };
    src.image = [images](ImageId, const ImageInfo& info) { return io::read_image(images / info.file_name); };
    src.external_prior = [priors](ImageId, const ImageInfo& info) {
        return io::load_prior_map(priors / (std::filesystem::path(info.file_name).stem().string() + ".oprior"));
    };
    return src;
}

/// Normalized (x, y) centroids of every non-empty original annotation.
inline std::vector<Centroid> normalized_centroids(const AnnotationSet& set) {
    std::vector<Centroid> out;
    for (const auto& a : set.annotations) {
        const auto st = mask_stats(a.mask);
        if (!st.centroid) continue;
        const auto& info = set.images.at(a.image_id);
        out.push_back({(st.centroid->x + 0.5) / info.width, (st.centroid->y + 0.5) / info.height});
    }
    return out;
}

struct ImageLog {
    ImageId image_id = 0;
    bool ok = true;
    std::string error;
    std::string error_kind;  // config | data | backend
    std::size_t prompts = 0;
    bool prior_fallback = false;
    PacTrace trace;
    std::size_t pseudo = 0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"image_id", image_id}, {"status", ok ? "ok" : "error"}};
        if (ok) {
            j["prompts"] = prompts;
            j["prior_fallback"] = prior_fallback;
            j["stages"] = trace.to_json();
            j["pseudo"] = pseudo;
        } else {
            j["error"] = error;
            j["error_kind"] = error_kind;
        }
        return j;
    }
};

struct PipelineResult {
    AnnotationSet merged;
    std::vector<AnnotationRecord> pseudo;
    std::vector<ImageLog> logs;
    std::size_t failed = 0;
    bool backend_failure = false;
    /// True when the failure share exceeds max_failure_percent.
    bool over_failure_threshold = false;

    double pseudo_per_image() const {
        return logs.empty() ? 0.0 : static_cast<double>(pseudo.size()) / static_cast<double>(logs.size());
    }
    nlohmann::json summary() const {
        return {{"images", logs.size()},
                {"failed", failed},
                {"pseudo_total", pseudo.size()},
                {"pseudo_per_image", pseudo_per_image()}};
    }
};

namespace detail {

inline ObjectPrior or_uniform(const std::function<ObjectPrior()>& build, int h, int w, bool& fallback) {
    try {
        return build();
    } catch (const DegeneratePriorError&) {
        fallback = true;
        return uniform_prior(h, w);
    }
}

}  // namespace detail

/// Builds the prompts for one image.
class PromptSource {
public:
    PromptSource(const PipelineConfig& cfg, const AnnotationSet& originals, const AnnotationSet* gt,
                 const PipelineSources& sources, SegmenterBackend& backend)
        : cfg_(cfg), gt_(gt), sources_(sources), backend_(backend) {
        if (cfg.prior.kind == PriorKind::gt_centroid && !gt_)
            throw ConfigError("gt-centroid prior needs a ground-truth annotation file");
        if (cfg.prior.kind == PriorKind::dist) {
            centroids_ = normalized_centroids(originals);
            if (centroids_.empty()) throw ConfigError("dist prior needs at least one original annotation");
        }
        if (cfg.prior.kind == PriorKind::attention && !backend.capabilities().attention)
            throw ConfigError("attention prior needs a backend that serves attention maps");
    }

    /// Dense prior for sampled kinds.
    ObjectPrior dense_prior(const ImageRef& ref, const ImageInfo& info, bool& fallback) const {
        const int h = info.height;
        const int w = info.width;
        switch (cfg_.prior.kind) {
            case PriorKind::dist:
                return detail::or_uniform(
                    [&] {
                        return dist_prior(centroids_, h, w, cfg_.prior.dist_sigma.value_or(default_dist_sigma(h, w)));
                    },
                    h, w, fallback);
            case PriorKind::contour: {
                const auto img = load_image(ref.id, info);
                return detail::or_uniform([&] { return contour_density_prior(img, cfg_.prior.contour_window); }, h, w,
                                          fallback);
            }
            case PriorKind::saliency: {
                const auto img = load_image(ref.id, info);
                return detail::or_uniform([&] { return saliency_prior(img, cfg_.prior.saliency); }, h, w, fallback);
            }
            case PriorKind::external: {
                const auto map = sources_.external_prior(ref.id, info);
                if (map.height() != h || map.width() != w)
                    throw DimensionError("external prior size does not match image " + std::to_string(ref.id));
                return detail::or_uniform([&] { return normalize_prior(map); }, h, w, fallback);
            }
            case PriorKind::attention: {
                const auto stack = backend_.attention(ref);
                return detail::or_uniform([&] { return aggregate_attention(stack); }, h, w, fallback);
            }
            default: throw PreconditionError("prior kind " + to_string(cfg_.prior.kind) + " is not a dense map");
        }
    }

    PromptSet prompts(const ImageRef& ref, const ImageInfo& info, bool& fallback) const {
        switch (cfg_.prior.kind) {
            case PriorKind::grid: return grid_prompts(info.height, info.width, cfg_.prior.grid_n, ref.id);
            case PriorKind::spx: return superpixel_prompts(load_image(ref.id, info), cfg_.prior.spx, ref.id);
            case PriorKind::gt_centroid: return gt_centroid_prompts(*gt_, ref.id);
            default: return sample_prompts(dense_prior(ref, info, fallback), cfg_.sampler, ref.id);
        }
    }

private:
    RgbImage load_image(ImageId id, const ImageInfo& info) const {
        auto img = sources_.image(id, info);
        if (img.height() != info.height || img.width() != info.width)
            throw DimensionError("image " + std::to_string(id) + " is " + std::to_string(img.width()) + "x" +
                                 std::to_string(img.height()) + ", annotation file says " +
                                 std::to_string(info.width) + "x" + std::to_string(info.height));
        return img;
    }

    const PipelineConfig& cfg_;
    const AnnotationSet* gt_;
    const PipelineSources& sources_;
    SegmenterBackend& backend_;
    std::vector<Centroid> centroids_;
};

/// Serializes calls into a backend that does not accept concurrent use.
class SerializedBackend : public SegmenterBackend {
public:
    explicit SerializedBackend(SegmenterBackend& inner) : inner_(inner) {}
    BackendCapabilities capabilities() const override { return inner_.capabilities(); }
    std::vector<ScoredSegment> segment(const ImageRef& image, const PromptSet& prompts) override {
        std::lock_guard lock(mu_);
        return inner_.segment(image, prompts);
    }
    AttentionStack attention(const ImageRef& image) override {
        std::lock_guard lock(mu_);
        return inner_.attention(image);
    }

private:
    SegmenterBackend& inner_;
    std::mutex mu_;
};

inline const char* classify_error(const std::exception& e) {
    if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const ProtocolError*>(&e)) return "backend";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    return "data";
}

/// Runs every image of `originals`. Output does not depend on the worker count.
/// `on_image` (optional) is called once per finished image, from worker threads.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const AnnotationSet& originals, SegmenterBackend& backend,
                                   const PipelineSources& sources, const AnnotationSet* gt = nullptr,
                                   const std::function<void(const ImageLog&)>& on_image = {}) {
    cfg.validate();
    SerializedBackend serialized(backend);
    SegmenterBackend& be = backend.capabilities().concurrent ? backend : static_cast<SegmenterBackend&>(serialized);
    const PromptSource prompt_source(cfg, originals, gt, sources, be);

    std::vector<std::pair<ImageId, const ImageInfo*>> images;
    for (const auto& [id, info] : originals.images) images.emplace_back(id, &info);
    std::map<ImageId, std::vector<const AnnotationRecord*>> by_image;
    for (const auto& a : originals.annotations) by_image[a.image_id].push_back(&a);

    std::vector<ImageLog> logs(images.size());
    std::vector<std::vector<AnnotationRecord>> pseudo(images.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < images.size();) {
            const auto [id, info] = images[i];
            ImageLog& log = logs[i];
            log.image_id = id;
            try {
                const ImageRef ref{id, sources.image_path ? sources.image_path(id, *info) : info->file_name,
                                   info->height, info->width};
                const PromptSet prompts = prompt_source.prompts(ref, *info, log.prior_fallback);
                log.prompts = prompts.size();
                pseudo[i] = make_pseudo_annotations(ref, prompts, be, by_image[id], cfg.pac, &log.trace);
                log.pseudo = pseudo[i].size();
            } catch (const std::exception& e) {
                log.ok = false;
                log.error = e.what();
                log.error_kind = classify_error(e);
                pseudo[i].clear();
            }
            if (on_image) on_image(log);
        }
    };
    {
        const int n = std::min<int>(cfg.workers, static_cast<int>(std::max<std::size_t>(images.size(), 1)));
        std::vector<std::jthread> pool;
        for (int t = 1; t < n; ++t) pool.emplace_back(work);
        work();
    }

    PipelineResult res;
    for (auto& p : pseudo)
        for (auto& r : p) res.pseudo.push_back(std::move(r));
    allocate_ids(res.pseudo, originals);
    res.merged = merge_annotations(originals, res.pseudo);
    res.merged.provenance = provenance(cfg);
    res.logs = std::move(logs);
    for (const auto& l : res.logs) {
        if (l.ok) continue;
        ++res.failed;
        if (l.error_kind == "backend") res.backend_failure = true;
    }
    res.over_failure_threshold =
        !res.logs.empty() && 100.0 * static_cast<double>(res.failed) / static_cast<double>(res.logs.size()) >
                                 cfg.max_failure_percent;
    return res;
}

struct StudyRow {
    std::string label;
    PriorKind kind = PriorKind::grid;
    QualityReport quality;
    std::size_t failed = 0;
    double pseudo_per_image = 0.0;

    nlohmann::json to_json() const {
        auto j = quality.to_json();
        j["prior"] = label;
        j["failed"] = failed;
        j["pseudo_per_image"] = pseudo_per_image;
        return j;
    }
};

/// One pipeline run per prior config, scored against `gt`; rows ranked by F1 descending (stable).
inline std::vector<StudyRow> run_prior_study(const PipelineConfig& base, const std::vector<PriorConfig>& priors,
                                             const AnnotationSet& originals, const AnnotationSet& gt,
                                             SegmenterBackend& backend, const PipelineSources& sources) {
    std::vector<StudyRow> rows;
    for (const auto& p : priors) {
        PipelineConfig cfg = base;
        cfg.prior = p;
        const auto res = run_pipeline(cfg, originals, backend, sources, &gt);
        StudyRow row;
        row.label = to_string(p.kind);
        row.kind = p.kind;
        row.quality = pseudo_quality(res.pseudo, gt.annotations);
        row.failed = res.failed;
        row.pseudo_per_image = res.pseudo_per_image();
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const StudyRow& a, const StudyRow& b) { return a.quality.f1 > b.quality.f1; });
    return rows;
}

}  // namespace sos
