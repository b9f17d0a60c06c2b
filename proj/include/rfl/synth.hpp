#pragma once

#include <string>
#include <vector>

#include "rfl/schema.hpp"

#include "json.hpp"

namespace rfl {

/// Synthetic star schema: table 0 is the fact table holding the label and
/// one foreign-key column per dimension table. Labels come from a known
/// linear model over the joined features plus Gaussian noise.
///
/// `duplication` is the number of joined rows each fact row produces; it is
/// realized by repeating the first dimension table's keys (copies share the
/// key's feature vector), so N = duplication * fact rows exactly.
struct SynthSpec {
  int orgs = 2;                    // M (>= 1)
  std::vector<int> clients;        // Q_i per org; defaults to all 1
  std::vector<Index> rows;         // n_i per org
  std::vector<Index> features;     // d_i per org
  int duplication = 1;
  int class_count = 1;             // d_c; >= 2 generates class labels
  double noise = 0.0;
  std::uint64_t seed = 0;

  static SynthSpec from_json(const nlohmann::json& j);
  void validate() const;
};

struct SynthResult {
  Query query;
  std::vector<Matrix> true_params;  // per org: d_i x d_c
};

SynthResult synth(const SynthSpec& spec);

/// Writes per-partition CSVs, the ground-truth parameters, and a ready-to-run
/// config template into `dir`.
void synth_to_dir(const SynthSpec& spec, const std::string& dir);

}  // namespace rfl
