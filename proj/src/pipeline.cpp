#include "tct/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "tct/exchange_format.hpp"
#include "tct/pfc.hpp"

namespace tct {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Strict reader: every key of an object must be consumed.
class Reader {
  public:
    Reader(const json &j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() == 0) {
            for (const auto &item : j_.items()) {
                if (std::find(used_.begin(), used_.end(), item.key()) == used_.end()) {
                    throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
                }
            }
        }
    }
    template <typename T>
    void get(const char *key, T &out) {
        used_.emplace_back(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception &e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }
    template <typename T>
    void get_optional(const char *key, std::optional<T> &out) {
        used_.emplace_back(key);
        if (!j_.contains(key) || j_.at(key).is_null()) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception &e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }
    const json *child(const char *key) {
        used_.emplace_back(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

  private:
    const json &j_;
    std::string where_;
    std::vector<std::string> used_;
};

void read_recipe(const json &j, PhantomRecipe &r) {
    Reader in(j, "phantom");
    in.get("side", r.side);
    in.get("pixel_size", r.pixel_size);
    in.get("r_inner_px", r.r_inner_px);
    in.get("r_outer_px", r.r_outer_px);
    in.get("n_cracks", r.n_cracks);
    in.get("crack_min", r.crack_min);
    in.get("crack_max", r.crack_max);
    in.get("wall_density", r.wall_density);
    in.get("crack_density", r.crack_density);
    in.get("max_placement_retries", r.max_placement_retries);
}

void read_quantify(const json &j, QuantifyStage &q) {
    Reader in(j, "quantify");
    in.get("enabled", q.enabled);
    in.get_optional("theta_deg", q.theta_deg);
    in.get_optional("n_view", q.n_view);
    in.get("working_side", q.working_side);
    in.get("n_phantoms", q.n_phantoms);
    in.get("theta_step_deg", q.theta_step_deg);
    in.get("search", q.search);
    in.get("exhaustive", q.exhaustive);
    if (const json *p = in.child("params")) {
        Reader pr(*p, "quantify.params");
        double t_theta_deg = rad_to_deg(q.params.T_theta);
        pr.get("T_theta_deg", t_theta_deg);
        q.params.T_theta = deg_to_rad(t_theta_deg);
        pr.get("T_nview", q.params.T_nview);
        pr.get("T_t", q.params.T_t);
        pr.get("alpha", q.params.alpha);
        pr.get("beta", q.params.beta);
        pr.get("gamma", q.params.gamma);
    }
    if (const json *s = in.child("surrogate")) {
        Reader sr(*s, "quantify.surrogate");
        sr.get("parallel_beam", q.surrogate.parallel_beam);
        sr.get("detector_span", q.surrogate.detector_span);
    }
    if (const json *c = in.child("certificate")) {
        Reader cr(*c, "quantify.certificate");
        cr.get("support_threshold", q.certificate.support_threshold);
        cr.get("rank_tolerance", q.certificate.rank_tolerance);
        cr.get("range_tolerance", q.certificate.range_tolerance);
        cr.get("lp_max_iterations", q.certificate.lp.max_iterations);
        cr.get("lp_tolerance", q.certificate.lp.tolerance);
    }
}

void read_atv(const json &j, AtvConfig &a) {
    Reader in(j, "atv");
    in.get("n_sart_iters", a.n_sart_iters);
    in.get("n_tv_steps", a.n_tv_steps);
    in.get("tv_step", a.tv_step);
    in.get("tv_step_ratio", a.tv_step_ratio);
    in.get("relaxation", a.relaxation);
    in.get("flip_sectors", a.flip_sectors);
    in.get("nonneg", a.nonneg);
    in.get("stop_tol", a.stop_tol);
    in.get("epsilon", a.epsilon);
    if (const json *w = in.child("sector_weights")) {
        if (!w->is_array() || w->size() != 4) {
            throw ConfigError("atv.sector_weights: expected four [w_h, w_v] pairs");
        }
        for (std::size_t k = 0; k < 4; ++k) {
            const auto pair = (*w)[k].get<std::vector<double>>();
            if (pair.size() != 2) {
                throw ConfigError("atv.sector_weights: expected [w_h, w_v]");
            }
            a.sector_weights[k] = {pair[0], pair[1]};
        }
    }
}

json recipe_json(const PhantomRecipe &r) {
    return {{"side", r.side},
            {"pixel_size", r.pixel_size},
            {"r_inner_px", r.r_inner_px},
            {"r_outer_px", r.r_outer_px},
            {"n_cracks", r.n_cracks},
            {"crack_min", r.crack_min},
            {"crack_max", r.crack_max},
            {"wall_density", r.wall_density},
            {"crack_density", r.crack_density},
            {"max_placement_retries", r.max_placement_retries}};
}

json to_json_value(const PipelineConfig &c) {
    json sectors = json::array();
    for (const auto &w : c.atv.sector_weights) {
        sectors.push_back({w.h, w.v});
    }
    json q = {{"enabled", c.quantify.enabled},
              {"theta_deg", c.quantify.theta_deg ? json(*c.quantify.theta_deg) : json(nullptr)},
              {"n_view", c.quantify.n_view ? json(*c.quantify.n_view) : json(nullptr)},
              {"working_side", c.quantify.working_side},
              {"n_phantoms", c.quantify.n_phantoms},
              {"theta_step_deg", c.quantify.theta_step_deg},
              {"search", c.quantify.search},
              {"exhaustive", c.quantify.exhaustive},
              {"params",
               {{"T_theta_deg", rad_to_deg(c.quantify.params.T_theta)},
                {"T_nview", c.quantify.params.T_nview},
                {"T_t", c.quantify.params.T_t},
                {"alpha", c.quantify.params.alpha},
                {"beta", c.quantify.params.beta},
                {"gamma", c.quantify.params.gamma}}},
              {"surrogate",
               {{"parallel_beam", c.quantify.surrogate.parallel_beam},
                {"detector_span", c.quantify.surrogate.detector_span}}},
              {"certificate",
               {{"support_threshold", c.quantify.certificate.support_threshold},
                {"rank_tolerance", c.quantify.certificate.rank_tolerance},
                {"range_tolerance", c.quantify.certificate.range_tolerance},
                {"lp_max_iterations", c.quantify.certificate.lp.max_iterations},
                {"lp_tolerance", c.quantify.certificate.lp.tolerance}}}};
    return {{"side", c.side},
            {"phantom", recipe_json(c.phantom)},
            {"mu_scale", c.mu_scale},
            {"noise",
             {{"enabled", c.noise.enabled},
              {"incident_photons", c.noise.incident_photons},
              {"round_robin", c.noise.round_robin}}},
            {"mask", {{"margin_bins", c.mask.margin_bins}, {"both_sides", c.mask.both_sides}}},
            {"quantify", q},
            {"completion", {{"fan_jacobian", c.completion.fan_jacobian}}},
            {"atv",
             {{"n_sart_iters", c.atv.n_sart_iters},
              {"n_tv_steps", c.atv.n_tv_steps},
              {"tv_step", c.atv.tv_step},
              {"tv_step_ratio", c.atv.tv_step_ratio},
              {"relaxation", c.atv.relaxation},
              {"sector_weights", sectors},
              {"flip_sectors", c.atv.flip_sectors},
              {"nonneg", c.atv.nonneg},
              {"stop_tol", c.atv.stop_tol},
              {"epsilon", c.atv.epsilon}}},
            {"fbp",
             {{"window", c.fbp.window == RampWindow::hann ? "hann" : "ram_lak"},
              {"cutoff", c.fbp.cutoff}}},
            {"pfc", c.pfc},
            {"pfc_use_corrected", c.pfc_use_corrected},
            {"denoise_hook", c.denoise_hook},
            {"refine_hook", c.refine_hook},
            {"output_dir", c.output_dir.string()},
            {"write_outputs", c.write_outputs},
            {"emit_png", c.emit_png},
            {"seed", c.seed}};
}

template <typename F>
auto stage(const char *name, F &&body) -> decltype(body()) {
    try {
        return body();
    } catch (const ConfigError &) {
        throw;
    } catch (const InfeasibleError &) {
        throw;
    } catch (const StageError &) {
        throw;
    } catch (const std::exception &e) {
        throw StageError(name, e.what());
    }
}

SliceImage to_image_units(const SliceImage &mu_img, double mu_scale) {
    return scaled(mu_img, 1.0 / mu_scale);
}

void run_hook(const std::string &command, const fs::path &in, const fs::path &out) {
    std::string cmd = command;
    auto replace = [&cmd](const std::string &key, const std::string &val) {
        for (std::size_t at = cmd.find(key); at != std::string::npos; at = cmd.find(key, at)) {
            cmd.replace(at, key.size(), val);
            at += val.size();
        }
    };
    replace("{in}", "'" + in.string() + "'");
    replace("{out}", "'" + out.string() + "'");
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
        throw NumericalError("hook exited with status " + std::to_string(rc) + ": " + cmd);
    }
}

} // namespace

void PipelineConfig::validate() const {
    if (side < 8) {
        throw ConfigError("pipeline: side must be at least 8");
    }
    phantom.validate();
    if (!(mu_scale > 0.0)) {
        throw ConfigError("pipeline: mu_scale must be positive");
    }
    if (noise.enabled) {
        if (!(noise.incident_photons > 0.0)) {
            throw ConfigError("pipeline: incident photon count must be positive");
        }
        for (double n0 : noise.round_robin) {
            if (!(n0 > 0.0)) {
                throw ConfigError("pipeline: incident photon counts must be positive");
            }
        }
    }
    if (mask.margin_bins < 0.0) {
        throw ConfigError("pipeline: negative mask margin");
    }
    if (quantify.enabled) {
        quantify.params.validate();
        if (quantify.theta_deg.has_value() != quantify.n_view.has_value()) {
            throw ConfigError("pipeline: quantify.theta_deg and quantify.n_view go together");
        }
        if (quantify.theta_deg && !(*quantify.theta_deg > 0.0 && *quantify.theta_deg < 180.0)) {
            throw ConfigError("pipeline: quantify.theta_deg must lie in (0, 180)");
        }
        if (quantify.n_view && *quantify.n_view < 1) {
            throw ConfigError("pipeline: quantify.n_view must be positive");
        }
        if (quantify.working_side < 4 || quantify.n_phantoms < 1 || quantify.theta_step_deg < 1) {
            throw ConfigError("pipeline: bad quantify search settings");
        }
        if (quantify.search != "frontier" && quantify.search != "grid") {
            throw ConfigError("pipeline: quantify.search must be frontier or grid");
        }
    }
    atv.validate();
    if (!(fbp.cutoff > 0.0 && fbp.cutoff <= 1.0)) {
        throw ConfigError("pipeline: fbp.cutoff must lie in (0, 1]");
    }
}

PipelineConfig config_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    PipelineConfig c;
    {
        Reader in(j, "config");
        in.get("side", c.side);
        if (const json *p = in.child("phantom")) {
            read_recipe(*p, c.phantom);
        }
        in.get("mu_scale", c.mu_scale);
        if (const json *n = in.child("noise")) {
            Reader nr(*n, "noise");
            nr.get("enabled", c.noise.enabled);
            nr.get("incident_photons", c.noise.incident_photons);
            nr.get("round_robin", c.noise.round_robin);
        }
        if (const json *m = in.child("mask")) {
            Reader mr(*m, "mask");
            mr.get("margin_bins", c.mask.margin_bins);
            mr.get("both_sides", c.mask.both_sides);
        }
        if (const json *q = in.child("quantify")) {
            read_quantify(*q, c.quantify);
        }
        if (const json *cm = in.child("completion")) {
            Reader cr(*cm, "completion");
            cr.get("fan_jacobian", c.completion.fan_jacobian);
        }
        if (const json *a = in.child("atv")) {
            read_atv(*a, c.atv);
        }
        if (const json *f = in.child("fbp")) {
            Reader fr(*f, "fbp");
            std::string window = "hann";
            fr.get("window", window);
            if (window == "hann") {
                c.fbp.window = RampWindow::hann;
            } else if (window == "ram_lak") {
                c.fbp.window = RampWindow::ram_lak;
            } else {
                throw ConfigError("fbp.window: expected hann or ram_lak");
            }
            fr.get("cutoff", c.fbp.cutoff);
        }
        in.get("pfc", c.pfc);
        in.get("pfc_use_corrected", c.pfc_use_corrected);
        in.get("denoise_hook", c.denoise_hook);
        in.get("refine_hook", c.refine_hook);
        std::string out_dir = c.output_dir.string();
        in.get("output_dir", out_dir);
        c.output_dir = out_dir;
        in.get("write_outputs", c.write_outputs);
        in.get("emit_png", c.emit_png);
        in.get("seed", c.seed);
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const PipelineConfig &cfg) { return to_json_value(cfg).dump(2); }

std::string config_hash(const PipelineConfig &cfg) {
    json j = to_json_value(cfg);
    // where files go does not change what they contain
    j.erase("output_dir");
    j.erase("write_outputs");
    j.erase("emit_png");
    return sha256_hex(j.dump());
}

fs::path artifact_path(const PipelineConfig &cfg, const std::string &stem, const std::string &ext) {
    return cfg.output_dir / (stem + "." + config_hash(cfg).substr(0, 12) + ext);
}

ScanGeometry pipeline_geometry(const PipelineConfig &cfg) { return ScanGeometry::desk_scale(cfg.side); }

Phantom make_case_phantom(const PipelineConfig &cfg, int index) {
    PhantomRecipe recipe = cfg.phantom;
    recipe.seed = cfg.seed + static_cast<std::uint64_t>(index);
    Phantom ph = generate_annulus_with_cracks(recipe);
    if (recipe.side != cfg.side) {
        const AnnulusSpec ann = recipe.annulus();
        ph.image = downscale(ph.image, cfg.side, ann);
        const double f = static_cast<double>(cfg.side) / recipe.side;
        for (auto &c : ph.cracks) {
            c.row0 = static_cast<int>(std::floor(c.row0 * f));
            c.col0 = static_cast<int>(std::floor(c.col0 * f));
            c.height = std::max(1, static_cast<int>(std::lround(c.height * f)));
            c.width = std::max(1, static_cast<int>(std::lround(c.width * f)));
        }
    }
    return ph;
}

SamplingSpec resolve_sampling(const PipelineConfig &cfg,
                              const std::function<void(const CandidateRecord &)> &progress) {
    const QuantifyStage &q = cfg.quantify;
    QuantifyOptions opts;
    opts.target_side = cfg.side;
    opts.target_geometry = pipeline_geometry(cfg);
    opts.r_inner_mm = cfg.phantom.r_inner_px * cfg.phantom.pixel_size;
    if (q.theta_deg) {
        SamplingSpec s;
        s.theta = deg_to_rad(*q.theta_deg);
        s.n_view = *q.n_view;
        s.working_side = q.working_side;
        s.t_star = std::numeric_limits<double>::quiet_NaN();
        s.objective = std::numeric_limits<double>::quiet_NaN();
        finish_spec(s, opts);
        return s;
    }
    return stage("quantify", [&] {
        PipelineConfig small = cfg;
        small.side = q.working_side;
        std::vector<SliceImage> phantoms;
        for (int k = 0; k < q.n_phantoms; ++k) {
            phantoms.push_back(make_case_phantom(small, 1000 + k).image);
        }
        opts.surrogate = q.surrogate;
        opts.certificate = q.certificate;
        opts.progress = progress;
        opts.search = q.search == "grid" ? QuantifySearch::grid : QuantifySearch::frontier;
        opts.monotone_pruning = !q.exhaustive;
        for (int deg = static_cast<int>(std::lround(rad_to_deg(q.params.T_theta))); deg >= 20;
             deg -= q.theta_step_deg) {
            opts.thetas.push_back(deg_to_rad(deg));
        }
        const int n_max = static_cast<int>(std::lround(q.params.T_nview));
        const double scale = sufficient_views(q.working_side) / n_max;
        for (int v = 4; v <= n_max; v += 2) {
            opts.n_views.push_back(std::max(1, static_cast<int>(std::lround(v * scale))));
        }
        opts.n_views.erase(std::unique(opts.n_views.begin(), opts.n_views.end()),
                           opts.n_views.end());
        SamplingModelParams params = q.params;
        params.T_nview *= scale;
        return quantify_projection(phantoms, ScanGeometry::table_one(), params, opts).best;
    });
}

Acquisition acquisition_for(const PipelineConfig &cfg, const std::optional<SamplingSpec> &spec) {
    Acquisition acq;
    acq.geometry = pipeline_geometry(cfg);
    if (!spec) {
        return acq;
    }
    // N_view views inside each theta arc, at the working side's own view count
    const double views_here = spec->r_view * sufficient_views(cfg.side);
    const int n_full = std::max(8, static_cast<int>(std::lround(views_here * 2.0 * pi / spec->theta)));
    acq.geometry.n_views_full = n_full;
    acq.geometry.angle_step = 2.0 * pi / n_full;
    const double r = cfg.phantom.r_inner_px * cfg.phantom.pixel_size;
    acq.d_prime_mm = detector_extension(acq.geometry, r, tilt_depth_for_angle(r, spec->theta));
    return acq;
}

CaseResult run_case(const PipelineConfig &cfg, const std::optional<SamplingSpec> &spec,
                    int index) {
    cfg.validate();
    CaseResult out;
    out.index = index;
    const std::string hash = config_hash(cfg);
    const double px = ScanGeometry::desk_pixel_size(cfg.side);
    const AnnulusSpec ann = cfg.phantom.annulus();
    const std::string tag = "case" + std::to_string(index);

    auto info = [&](const std::string &stage_name, const std::string &parent) {
        WriteInfo w;
        w.config_hash = hash;
        w.provenance = "stage=" + stage_name + " case=" + std::to_string(index) +
                       (parent.empty() ? "" : " parent=" + parent);
        return w;
    };
    auto save_image = [&](const std::string &stem, const SliceImage &img, const std::string &stage_name,
                          const std::string &parent) {
        if (!cfg.write_outputs) {
            return std::string();
        }
        const fs::path p = artifact_path(cfg, tag + "_" + stem, ".tct");
        write_image(p, img, info(stage_name, parent));
        out.files.push_back(p);
        if (cfg.emit_png) {
            const fs::path png = artifact_path(cfg, tag + "_" + stem, ".png");
            write_png(png, img, 0.0, 1.0);
            out.files.push_back(png);
        }
        return p.filename().string();
    };
    auto save_sino = [&](const std::string &stem, const Sinogram &s, const std::string &stage_name,
                         const std::string &parent) {
        if (!cfg.write_outputs) {
            return std::string();
        }
        const fs::path p = artifact_path(cfg, tag + "_" + stem, ".tct");
        write_sinogram(p, s, info(stage_name, parent));
        out.files.push_back(p);
        return p.filename().string();
    };

    const Acquisition acq = acquisition_for(cfg, spec);

    Sinogram full;
    stage("simulate", [&] {
        Phantom ph = make_case_phantom(cfg, index);
        out.truth = ph.image;
        out.truth.pixel_size = px;
        if (out.truth.roi_mask.empty()) {
            out.truth.roi_mask = annulus_roi(cfg.side, px, ann);
        }
        full = forward_project(scaled(out.truth, cfg.mu_scale), acq.geometry);
        if (cfg.noise.enabled) {
            NoiseModel nm;
            nm.incident_photons = cfg.noise.round_robin.empty()
                                      ? cfg.noise.incident_photons
                                      : cfg.noise.round_robin[static_cast<std::size_t>(index) %
                                                              cfg.noise.round_robin.size()];
            nm.seed = splitmix(cfg.seed ^ splitmix(static_cast<std::uint64_t>(index) + 0x5eed));
            full = apply_poisson_noise(full, nm);
        }
        out.measured = full;
        const auto mask = tangential_mask(acq.geometry, ann, acq.d_prime_mm, full.n_views, cfg.mask);
        apply_mask(out.measured, mask);
        return 0;
    });
    const std::string truth_file = save_image("truth", out.truth, "phantom", "");
    const std::string measured_file = save_sino("measured", out.measured, "simulate", truth_file);

    stage("complete", [&] {
        out.completed = complete_sinogram(out.measured, ann, out.completion, cfg.completion);
        return 0;
    });
    const std::string completed_file = save_sino("completed", out.completed, "complete", measured_file);
    if (cfg.write_outputs) {
        std::ostringstream rep;
        rep << std::setprecision(10) << "u_bar: " << out.completion.u_bar
            << "\nconst_estimate: " << out.completion.const_estimate
            << "\nclamped_samples: " << out.completion.clamped_samples
            << "\nmirror_fallbacks: " << out.completion.mirror_fallbacks
            << "\nskipped_views: " << out.completion.skipped_views.size() << "\nper_view_alpha:";
        for (double a : out.completion.per_view_alpha) {
            rep << ' ' << a;
        }
        rep << '\n';
        const fs::path p = artifact_path(cfg, tag + "_completion", ".txt");
        write_file_atomic(p, rep.str());
        out.files.push_back(p);
    }

    stage("reconstruct", [&] {
        Sinogram zero_filled = out.measured;
        zero_filled.zero_unmeasured();
        out.fbp_truncated = to_image_units(fbp_reconstruct(zero_filled, cfg.side, px, cfg.fbp), cfg.mu_scale);
        out.fbp_completed = to_image_units(fbp_reconstruct(out.completed, cfg.side, px, cfg.fbp), cfg.mu_scale);
        out.atv_run = reconstruct_atv(out.completed, cfg.side, px, cfg.atv);
        out.atv = to_image_units(out.atv_run.image, cfg.mu_scale);
        out.atv.roi_mask = out.truth.roi_mask;
        return 0;
    });
    save_image("fbp_truncated", out.fbp_truncated, "fbp", measured_file);
    std::string current_file = save_image("atv", out.atv, "atv", completed_file);
    if (cfg.write_outputs) {
        const fs::path p = artifact_path(cfg, tag + "_atv_history", ".txt");
        write_file_atomic(p, format_history(out.atv_run));
        out.files.push_back(p);
    }

    SliceImage current = out.atv;
    auto hook = [&](const char *name, const std::string &command) {
        if (command.empty()) {
            return;
        }
        stage(name, [&] {
            fs::path in = artifact_path(cfg, tag + "_" + name + "_in", ".tct");
            fs::path result = artifact_path(cfg, tag + "_" + name + "_out", ".tct");
            write_image(in, current, info(name, current_file));
            run_hook(command, in, result);
            SliceImage next = read_image(result);
            if (!next.same_grid(current)) {
                throw FormatError("hook output has a different grid");
            }
            if (next.roi_mask.empty()) {
                next.roi_mask = current.roi_mask;
            }
            current = next;
            current_file = result.filename().string();
            out.files.push_back(in);
            out.files.push_back(result);
            return 0;
        });
    };
    hook("denoise", cfg.denoise_hook);

    if (cfg.pfc) {
        stage("pfc", [&] {
            Sinogram reference = cfg.pfc_use_corrected ? out.completed : out.measured;
            if (cfg.pfc_use_corrected) {
                // every filled sample counts as measured for the residual
                for (std::size_t i = 0; i < reference.size(); ++i) {
                    reference.measured[i] = reference.is_filled(i) ? 1 : 0;
                    reference.estimated[i] = 0;
                    reference.mirrored[i] = 0;
                }
            }
            const SliceImage mu = scaled(current, cfg.mu_scale);
            out.residual_before_pfc = residual_report(mu, reference);
            const SliceImage corrected = pfc_apply(mu, reference, PfcOptions{cfg.fbp});
            out.residual_after_pfc = residual_report(corrected, reference);
            current = to_image_units(corrected, cfg.mu_scale);
            current.roi_mask = out.truth.roi_mask;
            return 0;
        });
        current_file = save_image("pfc", current, "pfc", current_file);
    }
    hook("refine", cfg.refine_hook);
    out.final_image = current;
    save_image("final", out.final_image, "final", current_file);

    stage("metrics", [&] {
        const RoiSpan roi(out.truth.roi_mask);
        const double peak = 1.0;
        out.metrics = {
            {"fbp_truncated", {evaluate(out.fbp_truncated, out.truth, roi, peak)}},
            {"fbp_completed", {evaluate(out.fbp_completed, out.truth, roi, peak)}},
            {"atv", {evaluate(out.atv, out.truth, roi, peak)}},
            {"pipeline", {evaluate(out.final_image, out.truth, roi, peak)}},
        };
        return 0;
    });
    return out;
}

PipelineResult run_pipeline(const PipelineConfig &cfg, int n_cases, int workers) {
    cfg.validate();
    if (n_cases < 1 || workers < 1) {
        throw ConfigError("pipeline: need at least one case and one worker");
    }
    PipelineResult res;
    if (cfg.quantify.enabled) {
        res.spec = resolve_sampling(cfg);
        if (cfg.write_outputs) {
            const fs::path p = artifact_path(cfg, "sampling", ".txt");
            write_file_atomic(p, format_spec(*res.spec));
            res.files.push_back(p);
        }
    }
    res.cases.resize(static_cast<std::size_t>(n_cases));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    auto worker = [&] {
        for (int k = next++; k < n_cases; k = next++) {
            try {
                res.cases[k] = run_case(cfg, res.spec, k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_lock);
                if (!failure) {
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    const int n_threads = std::min(workers, n_cases);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto &t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    std::vector<MethodMetrics> table;
    for (const auto &c : res.cases) {
        for (const auto &m : c.metrics) {
            auto it = std::find_if(table.begin(), table.end(),
                                   [&](const MethodMetrics &t) { return t.method == m.method; });
            if (it == table.end()) {
                table.push_back({m.method, {}});
                it = table.end() - 1;
            }
            it->samples.insert(it->samples.end(), m.samples.begin(), m.samples.end());
        }
        res.files.insert(res.files.end(), c.files.begin(), c.files.end());
    }
    res.metrics_table = format_metrics_table(table);
    if (cfg.write_outputs) {
        const fs::path p = artifact_path(cfg, "metrics", ".csv");
        write_file_atomic(p, res.metrics_table);
        res.files.push_back(p);
    }
    return res;
}

} // namespace tct
