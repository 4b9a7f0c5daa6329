#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tct/atv.hpp"
#include "tct/completion.hpp"
#include "tct/error.hpp"
#include "tct/fbp.hpp"
#include "tct/geometry.hpp"
#include "tct/metrics.hpp"
#include "tct/phantom.hpp"
#include "tct/projector.hpp"
#include "tct/quantify.hpp"

namespace tct {

/// Failure inside a named pipeline stage.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string &what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string &stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

struct QuantifyStage {
    bool enabled = true;
    /// A known result skips the search: both must be set.
    std::optional<double> theta_deg;
    std::optional<int> n_view;
    int working_side = 64;
    int n_phantoms = 1;
    /// Angles run from T_theta down to 20 degrees in this step.
    int theta_step_deg = 4;
    /// "frontier" or "grid".
    std::string search = "frontier";
    /// Grid search: evaluate every point instead of pruning by monotonicity.
    bool exhaustive = false;
    SamplingModelParams params{};
    SurrogateOptions surrogate{};
    CertificateOptions certificate{};
};

struct NoiseStage {
    bool enabled = true;
    double incident_photons = 2.0e5;
    /// Cycle through these counts by case index instead; empty keeps the one above.
    std::vector<double> round_robin;
};

struct PipelineConfig {
    int side = 64;
    /// Drawn at its own resolution, then downscaled to side.
    PhantomRecipe phantom{};
    /// Attenuation per mm of a unit image value.
    double mu_scale = 0.05;
    NoiseStage noise{};
    TangentialMaskOptions mask{};
    QuantifyStage quantify{};
    CompletionOptions completion{};
    AtvConfig atv{};
    FbpOptions fbp{};
    bool pfc = true;
    /// PFC against the consistency-corrected sinogram instead of raw data.
    bool pfc_use_corrected = false;
    /// Shell commands with {in} and {out} placeholders; empty skips the hook.
    std::string denoise_hook;
    std::string refine_hook;
    std::filesystem::path output_dir = "tct_out";
    bool write_outputs = true;
    bool emit_png = false;
    std::uint64_t seed = 1;

    void validate() const;
};

PipelineConfig config_from_json(const std::string &text);
PipelineConfig load_config(const std::filesystem::path &path);
std::string config_to_json(const PipelineConfig &cfg);
/// SHA-256 of the canonical JSON form.
std::string config_hash(const PipelineConfig &cfg);

/// The slice geometry of a working side: Table I rescaled to the side.
ScanGeometry pipeline_geometry(const PipelineConfig &cfg);

/// Ground truth of case @p index (seed + index), on the working grid.
Phantom make_case_phantom(const PipelineConfig &cfg, int index);

/// Runs the quantify stage, or returns the configured sampling.
SamplingSpec resolve_sampling(const PipelineConfig &cfg,
                              const std::function<void(const CandidateRecord &)> &progress = {});

/**
 * Scan geometry and detector extension implied by a sampling spec: N_view
 * views inside every theta arc, and the d' that tilts the inner tangent by
 * the matching depth. Without quantification the default grid and d' = 0.
 */
struct Acquisition {
    ScanGeometry geometry;
    double d_prime_mm = 0.0;
};
Acquisition acquisition_for(const PipelineConfig &cfg, const std::optional<SamplingSpec> &spec);

struct CaseResult {
    int index = 0;
    SliceImage truth;
    Sinogram measured;
    Sinogram completed;
    CompletionReport completion;
    SliceImage fbp_truncated; ///< FBP of the zero-filled measured data
    SliceImage fbp_completed;
    SliceImage atv;
    SliceImage final_image;
    AtvResult atv_run;
    double residual_before_pfc = 0.0;
    double residual_after_pfc = 0.0;
    std::vector<MethodMetrics> metrics; ///< one sample per method
    std::vector<std::filesystem::path> files;
};

/**
 * Simulate, mask, complete, reconstruct, refine and score one case. Stage
 * failures raise StageError; outputs already written stay on disk.
 */
CaseResult run_case(const PipelineConfig &cfg, const std::optional<SamplingSpec> &spec,
                    int index);

struct PipelineResult {
    std::optional<SamplingSpec> spec;
    std::vector<CaseResult> cases;
    std::string metrics_table;
    std::vector<std::filesystem::path> files;
};

/// Quantify once, then run @p n_cases cases on at most @p workers threads.
PipelineResult run_pipeline(const PipelineConfig &cfg, int n_cases = 1, int workers = 1);

/// Path of an output artifact: <dir>/<stem>.<hash prefix><ext>.
std::filesystem::path artifact_path(const PipelineConfig &cfg, const std::string &stem,
                                    const std::string &ext);

} // namespace tct
