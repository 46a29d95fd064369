#include "adsense/manifest.hpp"

#include <fstream>

#include "adsense/error.hpp"
#include "adsense/simd/kernels.hpp"

#ifndef ADSENSE_VERSION
#define ADSENSE_VERSION "0.0.0"
#endif

namespace adsense {

std::string_view version() { return ADSENSE_VERSION; }

nlohmann::json to_json(const ModelConfig& c) {
  return {{"p", c.p}, {"mu", c.mu}, {"sigma2", c.sigma2}, {"nu2", c.nu2}, {"n_dim", c.n_dim}, {"q", c.q}};
}

nlohmann::json to_json(const ExperimentSpec& spec) {
  nlohmann::json policies = nlohmann::json::array();
  for (Policy p : spec.policies) policies.push_back(std::string{policy_name(p)});
  return {{"config", to_json(spec.config)},
          {"r_grid", spec.r_grid},
          {"policies", policies},
          {"trials", spec.trials},
          {"base_seed", spec.base_seed},
          {"mc_samples_first_stage", spec.mc_samples_first_stage},
          {"workers", spec.workers},
          {"bound_source", source_name(spec.bound_source)}};
}

void write_manifest(const std::filesystem::path& file, nlohmann::json body) {
  body["version"] = std::string{version()};
  body["isa"] = std::string{simd::isa_name(simd::active_isa())};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write manifest " + file.string());
  out << body.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing manifest " + file.string());
}

}  // namespace adsense
