// Command-line front end: one verb per stage plus the whole pipeline.
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "tct/atv.hpp"
#include "tct/completion.hpp"
#include "tct/exchange_format.hpp"
#include "tct/fbp.hpp"
#include "tct/metrics.hpp"
#include "tct/pfc.hpp"
#include "tct/pipeline.hpp"

namespace {

using namespace tct;
namespace fs = std::filesystem;

enum Exit { ok = 0, config_error = 2, stage_failure = 3, infeasible = 4 };

struct Common {
    std::string config;
    bool emit_png = false;
    std::optional<int> side;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App *cmd, Common &c) {
    cmd->add_option("--config", c.config, "JSON configuration file");
    cmd->add_flag("--emit-png", c.emit_png, "also write 8-bit PNG previews");
    cmd->add_option("--side", c.side, "working slice side in pixels");
    cmd->add_option("--seed", c.seed, "base random seed");
}

PipelineConfig load(const Common &c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
    if (c.side) {
        cfg.side = *c.side;
    }
    if (c.seed) {
        cfg.seed = *c.seed;
    }
    cfg.emit_png = cfg.emit_png || c.emit_png;
    cfg.validate();
    return cfg;
}

WriteInfo info_for(const PipelineConfig &cfg, const std::string &stage, const std::string &parent = {}) {
    WriteInfo w;
    w.config_hash = config_hash(cfg);
    w.provenance = "stage=" + stage + (parent.empty() ? "" : " parent=" + parent);
    return w;
}

void maybe_png(const PipelineConfig &cfg, const fs::path &out, const SliceImage &img, double hi) {
    if (cfg.emit_png) {
        fs::path png = out;
        png.replace_extension(".png");
        write_png(png, img, 0.0, hi);
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Tangential CT toolkit"};
    app.require_subcommand(1);

    Common c_ph, c_pr, c_q, c_co, c_re, c_pf, c_me, c_pi;

    // phantom
    auto *ph = app.add_subcommand("phantom", "draw a cracked annulus on the working grid");
    add_common(ph, c_ph);
    std::string ph_out;
    int ph_index = 0;
    ph->add_option("--out", ph_out, "output image")->required();
    ph->add_option("--index", ph_index, "case index (seed offset)");

    // project
    auto *pr = app.add_subcommand("project", "simulate the tangential scan of an image");
    add_common(pr, c_pr);
    std::string pr_in, pr_out;
    std::optional<double> pr_theta;
    std::optional<int> pr_nview;
    bool pr_full = false, pr_no_noise = false;
    int pr_index = 0;
    pr->add_option("--in", pr_in, "input image")->required();
    pr->add_option("--out", pr_out, "output sinogram")->required();
    pr->add_option("--theta", pr_theta, "quantified angle in degrees (default: inscribed scan)");
    pr->add_option("--n-view", pr_nview, "quantified view count at the quantify working side");
    pr->add_flag("--full", pr_full, "keep every ray (no tangential mask)");
    pr->add_flag("--no-noise", pr_no_noise, "skip Poisson noise");
    pr->add_option("--index", pr_index, "case index for the noise stream");

    // quantify
    auto *qu = app.add_subcommand("quantify", "certify and pick the sampling (theta, N_view)");
    add_common(qu, c_q);
    std::string q_out;
    std::optional<int> q_phantoms, q_step, q_wside;
    bool q_exhaustive = false;
    std::optional<std::string> q_search;
    qu->add_option("--out", q_out, "write the sampling report here");
    qu->add_option("--phantoms", q_phantoms, "phantoms that must all pass");
    qu->add_option("--theta-step", q_step, "angle grid step in degrees");
    qu->add_option("--working-side", q_wside, "side of the certified grid");
    qu->add_option("--search", q_search, "frontier (default) or grid")
        ->check(CLI::IsMember({"frontier", "grid"}));
    qu->add_flag("--exhaustive", q_exhaustive, "grid search: evaluate every point");

    // complete
    auto *co = app.add_subcommand("complete", "complete a tangential sinogram to a full scan");
    add_common(co, c_co);
    std::string co_in, co_out, co_report;
    co->add_option("--in", co_in, "measured sinogram")->required();
    co->add_option("--out", co_out, "completed sinogram")->required();
    co->add_option("--report", co_report, "completion report");

    // reconstruct
    auto *re = app.add_subcommand("reconstruct", "FBP or SART+ATV reconstruction");
    add_common(re, c_re);
    std::string re_in, re_out, re_method = "atv", re_history;
    re->add_option("--in", re_in, "sinogram")->required();
    re->add_option("--out", re_out, "output image")->required();
    re->add_option("--method", re_method, "fbp or atv")->check(CLI::IsMember({"fbp", "atv"}));
    re->add_option("--history", re_history, "ATV residual history file");

    // pfc
    auto *pf = app.add_subcommand("pfc", "projection fidelity correction of a slice");
    add_common(pf, c_pf);
    std::string pf_cand, pf_meas, pf_out;
    pf->add_option("--candidate", pf_cand, "slice to correct")->required();
    pf->add_option("--measured", pf_meas, "measured sinogram")->required();
    pf->add_option("--out", pf_out, "corrected slice")->required();

    // metrics
    auto *me = app.add_subcommand("metrics", "RMSE / PSNR / SSIM over the ROI");
    add_common(me, c_me);
    std::vector<std::string> me_results;
    std::string me_truth;
    std::optional<double> me_peak;
    me->add_option("--result", me_results, "one or more slices (label=path or path)")->required();
    me->add_option("--truth", me_truth, "reference slice")->required();
    me->add_option("--peak", me_peak, "fixed peak (default: reference ROI maximum for PSNR, larger of both for SSIM)");

    // pipeline
    auto *pi = app.add_subcommand("pipeline", "run the whole chain and score it");
    add_common(pi, c_pi);
    int pi_cases = 1, pi_workers = 1;
    std::string pi_out_dir;
    bool pi_no_pq = false, pi_no_pfc = false;
    std::optional<double> pi_theta;
    std::optional<int> pi_nview;
    pi->add_option("--cases", pi_cases, "number of phantoms");
    pi->add_option("--workers", pi_workers, "concurrent cases");
    pi->add_option("--out-dir", pi_out_dir, "output directory");
    pi->add_flag("--no-pq", pi_no_pq, "ablation: skip projection quantification");
    pi->add_flag("--no-pfc", pi_no_pfc, "ablation: skip the projection fidelity step");
    pi->add_option("--theta", pi_theta, "use this quantified angle (degrees)");
    pi->add_option("--n-view", pi_nview, "use this quantified view count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    try {
        if (*ph) {
            const PipelineConfig cfg = load(c_ph);
            const Phantom p = make_case_phantom(cfg, ph_index);
            SliceImage img = p.image;
            img.pixel_size = ScanGeometry::desk_pixel_size(cfg.side);
            write_image(ph_out, img, info_for(cfg, "phantom"));
            maybe_png(cfg, ph_out, img, 1.0);
        } else if (*pr) {
            PipelineConfig cfg = load(c_pr);
            if (pr_theta.has_value() != pr_nview.has_value()) {
                throw ConfigError("project: --theta and --n-view go together");
            }
            const SliceImage img = read_image(pr_in);
            if (img.side != cfg.side) {
                cfg.side = img.side;
            }
            std::optional<SamplingSpec> spec;
            if (pr_theta) {
                cfg.quantify.theta_deg = pr_theta;
                cfg.quantify.n_view = pr_nview;
                spec = resolve_sampling(cfg);
            }
            const Acquisition acq = acquisition_for(cfg, spec);
            Sinogram s = forward_project(scaled(img, cfg.mu_scale), acq.geometry);
            if (cfg.noise.enabled && !pr_no_noise) {
                NoiseModel nm;
                nm.incident_photons = cfg.noise.incident_photons;
                nm.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(pr_index);
                s = apply_poisson_noise(s, nm);
            }
            if (!pr_full) {
                apply_mask(s, tangential_mask(acq.geometry, cfg.phantom.annulus(), acq.d_prime_mm,
                                              s.n_views, cfg.mask));
            }
            write_sinogram(pr_out, s, info_for(cfg, "project", fs::path(pr_in).filename().string()));
        } else if (*qu) {
            PipelineConfig cfg = load(c_q);
            cfg.quantify.enabled = true;
            cfg.quantify.theta_deg.reset();
            cfg.quantify.n_view.reset();
            if (q_phantoms) {
                cfg.quantify.n_phantoms = *q_phantoms;
            }
            if (q_step) {
                cfg.quantify.theta_step_deg = *q_step;
            }
            if (q_wside) {
                cfg.quantify.working_side = *q_wside;
            }
            if (q_search) {
                cfg.quantify.search = *q_search;
            }
            cfg.quantify.exhaustive = q_exhaustive;
            cfg.validate();
            const SamplingSpec spec = resolve_sampling(cfg, [](const CandidateRecord &c) {
                if (c.evaluated) {
                    std::cerr << "theta " << rad_to_deg(c.theta) << " n_view " << c.n_view
                              << " t* " << c.t_star << (c.passes ? " pass" : " fail") << " ("
                              << c.seconds << " s)\n";
                }
            });
            const std::string text = format_spec(spec);
            std::cout << text;
            if (!q_out.empty()) {
                write_file_atomic(q_out, text);
            }
        } else if (*co) {
            const PipelineConfig cfg = load(c_co);
            const Sinogram s = read_sinogram(co_in);
            CompletionReport rep;
            const Sinogram done = complete_sinogram(s, cfg.phantom.annulus(), rep, cfg.completion);
            write_sinogram(co_out, done, info_for(cfg, "complete", fs::path(co_in).filename().string()));
            std::ostringstream os;
            os << std::setprecision(10) << "u_bar: " << rep.u_bar << "\nconst_estimate: "
               << rep.const_estimate << "\nclamped_samples: " << rep.clamped_samples
               << "\nmirror_fallbacks: " << rep.mirror_fallbacks
               << "\nskipped_views: " << rep.skipped_views.size() << '\n';
            std::cout << os.str();
            if (!co_report.empty()) {
                write_file_atomic(co_report, os.str());
            }
        } else if (*re) {
            PipelineConfig cfg = load(c_re);
            const Sinogram s = read_sinogram(re_in);
            const int side = c_re.side ? *c_re.side : cfg.side;
            const double px = ScanGeometry::desk_pixel_size(side);
            SliceImage mu;
            if (re_method == "fbp") {
                mu = fbp_reconstruct(s, side, px, cfg.fbp);
            } else {
                const AtvResult r = reconstruct_atv(s, side, px, cfg.atv);
                mu = r.image;
                if (!re_history.empty()) {
                    write_file_atomic(re_history, format_history(r));
                }
            }
            SliceImage img = scaled(mu, 1.0 / cfg.mu_scale);
            img.roi_mask = annulus_roi(side, px, cfg.phantom.annulus());
            write_image(re_out, img, info_for(cfg, re_method, fs::path(re_in).filename().string()));
            maybe_png(cfg, re_out, img, 1.0);
        } else if (*pf) {
            const PipelineConfig cfg = load(c_pf);
            const SliceImage cand = read_image(pf_cand);
            const Sinogram s = read_sinogram(pf_meas);
            const SliceImage mu = scaled(cand, cfg.mu_scale);
            const double before = residual_report(mu, s);
            SliceImage out = scaled(pfc_apply(mu, s, PfcOptions{cfg.fbp}), 1.0 / cfg.mu_scale);
            const double after = residual_report(scaled(out, cfg.mu_scale), s);
            out.roi_mask = cand.roi_mask;
            write_image(pf_out, out, info_for(cfg, "pfc", fs::path(pf_cand).filename().string()));
            maybe_png(cfg, pf_out, out, 1.0);
            std::cout << "residual_before: " << before << "\nresidual_after: " << after << '\n';
        } else if (*me) {
            const SliceImage truth = read_image(me_truth);
            std::vector<MethodMetrics> rows;
            for (const auto &item : me_results) {
                const auto eq = item.find('=');
                const std::string label = eq == std::string::npos ? fs::path(item).stem().string()
                                                                  : item.substr(0, eq);
                const std::string path = eq == std::string::npos ? item : item.substr(eq + 1);
                const SliceImage img = read_image(path);
                rows.push_back({label, {evaluate(img, truth, RoiSpan(truth.roi_mask), me_peak)}});
            }
            std::cout << format_metrics_table(rows);
        } else if (*pi) {
            PipelineConfig cfg = load(c_pi);
            if (!pi_out_dir.empty()) {
                cfg.output_dir = pi_out_dir;
            }
            if (pi_no_pq) {
                cfg.quantify.enabled = false;
            }
            if (pi_no_pfc) {
                cfg.pfc = false;
            }
            if (pi_theta.has_value() != pi_nview.has_value()) {
                throw ConfigError("pipeline: --theta and --n-view go together");
            }
            if (pi_theta) {
                cfg.quantify.theta_deg = pi_theta;
                cfg.quantify.n_view = pi_nview;
            }
            cfg.validate();
            const PipelineResult res = run_pipeline(cfg, pi_cases, pi_workers);
            if (res.spec) {
                std::cout << format_spec(*res.spec);
            }
            std::cout << res.metrics_table;
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const InfeasibleError &e) {
        std::cerr << "infeasible: " << e.what() << "\n  " << e.diagnostic() << '\n';
        return infeasible;
    } catch (const StageError &e) {
        std::cerr << "stage " << e.stage() << " failed: " << e.what() << '\n';
        return stage_failure;
    } catch (const std::exception &e) {
        std::cerr << "failed: " << e.what() << '\n';
        return stage_failure;
    }
    return ok;
}
