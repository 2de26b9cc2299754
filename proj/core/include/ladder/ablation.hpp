#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ladder/config.hpp"
#include "ladder/dataset.hpp"
#include "ladder/train.hpp"

namespace ladder {

/// One trained (variant, seed) run, reduced to the reported columns.
struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double task_success = 0.0;
  double distinct2 = 0.0;
  double entropy = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // variant-major, seeds in the given order

  /// CSV: variant,seed,task_success,distinct2,entropy — one row per run.
  std::string runs_csv() const;
  /// CSV: variant,runs,mean/stddev per metric, aggregated over the runs that
  /// survived (sample stddev, 0 for a single run). Variants whose every run
  /// failed are absent.
  std::string summary_csv() const;
};

/// The five ablation variants, in fixed reporting order.
const std::vector<std::string>& ablation_variant_names();

/// Applies a named variant to a base config: "Full LADDER" (unchanged),
/// "w/o CoT" (single reasoning step), "w/o MoE" (one dense expert),
/// "w/o DimMap" (identity lift/descend, lifted_dim = base_dim),
/// "Only-DimMap" (lift/descend kept, single step, one dense expert).
/// Unknown name → ConfigError.
LadderConfig apply_variant(const LadderConfig& base, const std::string& name);

/// Trains every variant with every seed (model and run seeds both set to the
/// run's seed) and evaluates on the held-out split. Requires at least 3
/// seeds. A failing run is dropped from the table with a warning on stderr;
/// the other runs proceed. `n_threads` > 1 fans the independent runs across
/// worker threads; results and warnings are merged in deterministic
/// (variant, seed) order, so the output never depends on scheduling.
AblationTable run_ablation(const Dataset& dataset, const LadderConfig& base_model_cfg,
                           const TrainConfig& base_train_cfg,
                           const std::vector<std::uint64_t>& seeds, std::size_t n_threads = 1);

// The pinned default ablation experiment: a sixteen-class keyword task with
// low noise, sized so every variant that trains correctly saturates the
// held-out split while the five-variant sweep stays well under ten minutes.
// The full model must reach at least every ablated variant's mean success
// here; a wiring or training regression in any component shows up as the
// full model falling below the simplified ones. The CLI and the acceptance
// checks share these so there is a single source of truth for "the"
// ablation experiment.
ToyOptions default_ablation_data_options();
inline constexpr std::size_t kAblationDataSize = 480;
inline constexpr std::uint64_t kAblationDataSeed = 1;
LadderConfig default_ablation_model_config();
TrainConfig default_ablation_train_config();

}  // namespace ladder
