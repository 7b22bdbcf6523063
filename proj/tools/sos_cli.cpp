// sos: object-focused pseudo annotation pipeline.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 backend error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sos/backends.hpp"
#include "sos/coco_io.hpp"
#include "sos/error.hpp"
#include "sos/eval.hpp"
#include "sos/image_io.hpp"
#include "sos/pipeline.hpp"
#include "sos/prior.hpp"
#include "sos/prior_map_io.hpp"
#include "sos/synthetic.hpp"

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kConfig = 1, kData = 2, kBackend = 3 };

struct Overrides {
    std::string config;
    std::optional<std::string> prior;
    std::optional<int> grid_n;
    std::optional<std::string> prior_dir;
    std::optional<int> S;
    std::optional<int> N;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau_conf;
    std::optional<double> tau_nms;
    std::optional<double> tau_gt;
    std::optional<int> P;
    std::optional<std::string> backend;
    std::optional<std::string> backend_path;
    std::optional<std::string> endpoint;
    std::optional<std::string> record;
    std::optional<int> workers;
    std::optional<double> max_failure;
    std::optional<std::string> annotations;
    std::optional<std::string> images;
    std::optional<std::string> gt;
    std::optional<std::string> output;
    std::optional<std::string> log;
    bool verbose = false;
};

void add_pipeline_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON pipeline config");
    cmd->add_option("--prior", o.prior, "grid|dist|spx|contour|saliency|external|attention|gt-centroid");
    cmd->add_option("--grid-n", o.grid_n, "grid side for the grid prior");
    cmd->add_option("--prior-dir", o.prior_dir, "directory of external .oprior maps");
    cmd->add_option("--S", o.S, "prompts per image");
    cmd->add_option("--N", o.N, "pruning half-window");
    cmd->add_option("--seed", o.seed, "sampler seed");
    cmd->add_option("--tau-conf", o.tau_conf, "confidence threshold");
    cmd->add_option("--tau-nms", o.tau_nms, "mask NMS IoU threshold");
    cmd->add_option("--tau-gt", o.tau_gt, "IoU threshold against original annotations");
    cmd->add_option("--P", o.P, "pseudo annotations per image");
    cmd->add_option("--backend", o.backend, "oracle|bridge|replay");
    cmd->add_option("--backend-path", o.backend_path, "oracle fixture or replay file");
    cmd->add_option("--endpoint", o.endpoint, "bridge endpoint: unix:<path> or exec:<command>");
    cmd->add_option("--record", o.record, "tee bridge exchanges into this replay file");
    cmd->add_option("-j,--workers", o.workers, "worker threads");
    cmd->add_option("--max-failure-percent", o.max_failure, "tolerated share of failed images");
    cmd->add_option("--annotations", o.annotations, "original annotations (COCO JSON)");
    cmd->add_option("--images", o.images, "image directory");
    cmd->add_option("--gt", o.gt, "ground-truth annotations (gt-centroid prior, study)");
    cmd->add_option("-o,--output", o.output, "output annotation file");
    cmd->add_option("--log", o.log, "per-image NDJSON log");
    cmd->add_flag("-v,--verbose", o.verbose, "print per-image log lines to stderr");
}

sos::PipelineConfig resolve_config(const Overrides& o) {
    sos::PipelineConfig cfg;
    if (!o.config.empty()) {
        json doc;
        try {
            doc = sos::io::read_json_file(o.config);
        } catch (const sos::ParseError& e) {
            throw sos::ConfigError(e.what());
        }
        sos::apply_config_json(cfg, doc);
    }
    if (o.prior) cfg.prior.kind = sos::parse_prior_kind(*o.prior);
    if (o.grid_n) cfg.prior.grid_n = *o.grid_n;
    if (o.prior_dir) cfg.prior.prior_dir = *o.prior_dir;
    if (o.S) cfg.sampler.S = *o.S;
    if (o.N) cfg.sampler.N = *o.N;
    if (o.seed) cfg.sampler.seed = *o.seed;
    if (o.tau_conf) cfg.pac.tau_conf = *o.tau_conf;
    if (o.tau_nms) cfg.pac.tau_nms = *o.tau_nms;
    if (o.tau_gt) cfg.pac.tau_gt = *o.tau_gt;
    if (o.P) cfg.pac.P = *o.P;
    if (o.backend) cfg.backend.kind = *o.backend;
    if (o.backend_path) cfg.backend.path = *o.backend_path;
    if (o.endpoint) cfg.backend.endpoint = *o.endpoint;
    if (o.record) cfg.backend.record = *o.record;
    if (o.workers) cfg.workers = *o.workers;
    if (o.max_failure) cfg.max_failure_percent = *o.max_failure;
    if (o.annotations) cfg.paths.annotations = *o.annotations;
    if (o.images) cfg.paths.images = *o.images;
    if (o.gt) cfg.paths.gt = *o.gt;
    if (o.output) cfg.paths.output = *o.output;
    if (o.log) cfg.paths.log = *o.log;
    cfg.validate();
    if (cfg.paths.annotations.empty()) throw sos::ConfigError("paths.annotations (--annotations) is required");
    return cfg;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

int cmd_annotate(const Overrides& o) {
    const auto cfg = resolve_config(o);
    if (cfg.paths.output.empty()) throw sos::ConfigError("paths.output (--output) is required");
    const auto originals = sos::io::load_annotations(cfg.paths.annotations);
    std::optional<sos::AnnotationSet> gt;
    if (!cfg.paths.gt.empty()) gt = sos::io::load_annotations(cfg.paths.gt);
    auto backend = sos::make_backend(cfg.backend);
    const auto sources = sos::disk_sources(cfg);

    std::mutex err_mu;
    const auto res = sos::run_pipeline(cfg, originals, *backend, sources, gt ? &*gt : nullptr,
                                       [&](const sos::ImageLog& log) {
                                           if (!o.verbose && log.ok) return;
                                           std::lock_guard lock(err_mu);
                                           std::cerr << log.to_json().dump() << '\n';
                                       });
    sos::io::save_annotations(res.merged, cfg.paths.output);
    if (!cfg.paths.log.empty()) {
        std::ofstream log(cfg.paths.log);
        if (!log) throw sos::ParseError("cannot write " + cfg.paths.log);
        for (const auto& l : res.logs) log << l.to_json().dump() << '\n';
        log << json{{"summary", res.summary()}}.dump() << '\n';
    }
    std::cout << res.summary().dump() << '\n';
    if (res.over_failure_threshold) {
        std::cerr << "sos: " << res.failed << " of " << res.logs.size() << " images failed (limit "
                  << cfg.max_failure_percent << "%)\n";
        return res.backend_failure ? kBackend : kData;
    }
    return kOk;
}

std::vector<sos::AnnotationRecord> pseudo_only(const sos::AnnotationSet& set, bool all) {
    std::vector<sos::AnnotationRecord> out;
    for (const auto& a : set.annotations)
        if (all || a.source == sos::AnnotationSource::pseudo) out.push_back(a);
    return out;
}

int cmd_eval(const std::string& dets_path, const std::string& gt_path, bool as_json) {
    const auto gt = sos::io::load_annotations(gt_path);
    const auto dets = sos::io::load_detections(dets_path, gt);
    const auto rep = sos::evaluate_detections(dets, gt);
    if (as_json) {
        std::cout << rep.to_json().dump(2) << '\n';
        return kOk;
    }
    std::cout << "# class-agnostic COCO mask eval; AR@100 averaged over IoU 0.50:0.05:0.95\n";
    std::cout << "AP     AR100  F1\n" << fmt(rep.ap) << "   " << fmt(rep.ar100) << "   " << fmt(rep.f1) << '\n';
    std::cout << "\nIoU    AP     recall\n";
    for (const auto& t : rep.per_threshold) {
        char line[64];
        std::snprintf(line, sizeof line, "%.2f   %5.1f  %5.1f\n", t.iou, t.ap, t.recall);
        std::cout << line;
    }
    return kOk;
}

int cmd_quality(const std::string& pseudo_path, const std::string& gt_path, double iou, bool all, bool as_json) {
    const auto pseudo_set = sos::io::load_annotations(pseudo_path);
    const auto gt = sos::io::load_annotations(gt_path);
    const auto q = sos::pseudo_quality(pseudo_only(pseudo_set, all), gt.annotations, iou);
    if (as_json) {
        std::cout << q.to_json().dump(2) << '\n';
        return kOk;
    }
    std::cout << "precision  recall  F1    (IoU " << iou << ", " << q.num_pseudo << " pseudo, " << q.num_gt << " gt)\n"
              << fmt(q.precision) << "       " << fmt(q.recall) << "    " << fmt(q.f1) << '\n';
    return kOk;
}

int cmd_study(const Overrides& o, const std::vector<std::string>& kinds, bool as_json) {
    auto cfg = resolve_config(o);
    if (cfg.paths.gt.empty()) throw sos::ConfigError("study needs ground truth (--gt)");
    if (kinds.empty()) throw sos::ConfigError("study needs at least one prior (--priors)");
    const auto originals = sos::io::load_annotations(cfg.paths.annotations);
    const auto gt = sos::io::load_annotations(cfg.paths.gt);
    auto backend = sos::make_backend(cfg.backend);
    std::vector<sos::PriorConfig> priors;
    for (const auto& k : kinds) {
        sos::PriorConfig p = cfg.prior;
        p.kind = sos::parse_prior_kind(k);
        priors.push_back(p);
    }
    const auto rows = sos::run_prior_study(cfg, priors, originals, gt, *backend, sos::disk_sources(cfg));
    if (as_json) {
        json out = json::array();
        for (const auto& r : rows) out.push_back(r.to_json());
        std::cout << out.dump(2) << '\n';
        return kOk;
    }
    std::cout << "prior         precision  recall  F1     pseudo/img  failed\n";
    for (const auto& r : rows) {
        char line[128];
        std::snprintf(line, sizeof line, "%-12s  %9.1f  %6.1f  %5.1f  %10.2f  %6zu\n", r.label.c_str(),
                      r.quality.precision, r.quality.recall, r.quality.f1, r.pseudo_per_image, r.failed);
        std::cout << line;
    }
    return kOk;
}

int cmd_prior(const std::string& kind, const std::string& image_path, const std::string& annotations,
              const std::string& out, int window, double sigma, const std::string& map_path) {
    sos::RealGrid map;
    const auto k = sos::parse_prior_kind(kind);
    if (k == sos::PriorKind::external) {
        if (map_path.empty()) throw sos::ConfigError("external prior needs --map");
        map = sos::normalize_prior(sos::io::load_prior_map(map_path)).values();
    } else if (k == sos::PriorKind::dist) {
        if (annotations.empty()) throw sos::ConfigError("dist prior needs --annotations");
        const auto set = sos::io::load_annotations(annotations);
        const auto centroids = sos::normalized_centroids(set);
        int h = 0;
        int w = 0;
        if (!image_path.empty()) {
            const auto img = sos::io::read_image(image_path);
            h = img.height();
            w = img.width();
        } else if (!set.images.empty()) {
            h = set.images.begin()->second.height;
            w = set.images.begin()->second.width;
        }
        map = sos::dist_prior(centroids, h, w, sigma >= 0.0 ? sigma : sos::default_dist_sigma(h, w)).values();
    } else if (k == sos::PriorKind::contour || k == sos::PriorKind::saliency) {
        if (image_path.empty()) throw sos::ConfigError(kind + " prior needs --image");
        const auto img = sos::io::read_image(image_path);
        map = k == sos::PriorKind::contour ? sos::contour_density_prior(img, window).values()
                                           : sos::saliency_prior(img).values();
    } else {
        throw sos::ConfigError("prior kind " + kind + " yields prompts, not a map");
    }
    if (std::filesystem::path(out).extension() == ".pgm") sos::io::write_pgm_scaled(out, map);
    else sos::io::save_prior_map(map, out);
    return kOk;
}

int cmd_synth(const std::string& dir, int count, std::uint64_t seed) {
    if (count < 1) throw sos::ConfigError("--count must be >= 1");
    const auto d = sos::synth::make_dataset(seed, count);
    sos::synth::write_dataset(d, dir);
    std::cout << json{{"images", count}, {"gt", d.gt.annotations.size()}, {"originals", d.originals.annotations.size()}}
                     .dump()
              << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object-focused pseudo annotation pipeline"};
    app.require_subcommand(1);

    Overrides annotate_o;
    auto* annotate = app.add_subcommand("annotate", "run the pipeline and write merged annotations");
    add_pipeline_flags(annotate, annotate_o);

    std::string dets_path;
    std::string gt_path;
    bool eval_json = false;
    auto* eval = app.add_subcommand("eval", "class-agnostic mask AP / AR@100 / F1");
    eval->add_option("--dets", dets_path, "detections (COCO results JSON)")->required();
    eval->add_option("--gt", gt_path, "ground truth (COCO JSON)")->required();
    eval->add_flag("--json", eval_json, "emit JSON");

    std::string pseudo_path;
    std::string qgt_path;
    double q_iou = 0.5;
    bool q_all = false;
    bool q_json = false;
    auto* quality = app.add_subcommand("quality", "precision / recall of pseudo annotations");
    quality->add_option("--pseudo", pseudo_path, "annotation file holding pseudo annotations")->required();
    quality->add_option("--gt", qgt_path, "ground truth (COCO JSON)")->required();
    quality->add_option("--iou", q_iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
    quality->add_flag("--all", q_all, "score every annotation, not only pseudo-tagged ones");
    quality->add_flag("--json", q_json, "emit JSON");

    Overrides study_o;
    std::vector<std::string> study_priors;
    bool study_json = false;
    auto* study = app.add_subcommand("study", "compare priors by pseudo annotation quality");
    add_pipeline_flags(study, study_o);
    study->add_option("--priors", study_priors, "prior kinds to compare")->delimiter(',');
    study->add_flag("--json", study_json, "emit JSON");

    std::string prior_kind = "saliency";
    std::string prior_image;
    std::string prior_annotations;
    std::string prior_out;
    std::string prior_map;
    int prior_window = 15;
    double prior_sigma = -1.0;
    auto* prior = app.add_subcommand("prior", "write a dense prior map for inspection");
    prior->add_option("--kind", prior_kind, "saliency|contour|dist|external");
    prior->add_option("--image", prior_image, "input image");
    prior->add_option("--annotations", prior_annotations, "annotations for the dist prior");
    prior->add_option("--map", prior_map, "external prior map");
    prior->add_option("--window", prior_window, "contour density window");
    prior->add_option("--sigma", prior_sigma, "dist smoothing sigma (default 2% of diagonal)");
    prior->add_option("-o,--out", prior_out, "output .oprior or .pgm")->required();

    std::string synth_dir;
    int synth_count = 20;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "write a synthetic scene dataset with an oracle fixture");
    synth->add_option("-o,--out", synth_dir, "output directory")->required();
    synth->add_option("--count", synth_count, "number of scenes");
    synth->add_option("--seed", synth_seed, "scene seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (annotate->parsed()) return cmd_annotate(annotate_o);
        if (eval->parsed()) return cmd_eval(dets_path, gt_path, eval_json);
        if (quality->parsed()) return cmd_quality(pseudo_path, qgt_path, q_iou, q_all, q_json);
        if (study->parsed()) return cmd_study(study_o, study_priors, study_json);
        if (prior->parsed())
            return cmd_prior(prior_kind, prior_image, prior_annotations, prior_out, prior_window, prior_sigma,
                             prior_map);
        if (synth->parsed()) return cmd_synth(synth_dir, synth_count, synth_seed);
    } catch (const sos::ConfigError& e) {
        std::cerr << "sos: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const sos::TransportError& e) {
        std::cerr << "sos: backend error: " << e.what() << '\n';
        return kBackend;
    } catch (const sos::ProtocolError& e) {
        std::cerr << "sos: backend error: " << e.what() << '\n';
        return kBackend;
    } catch (const std::exception& e) {
        std::cerr << "sos: data error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
