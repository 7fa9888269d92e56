#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mdt/dgp.hpp"
#include "mdt/missgen.hpp"

namespace mdt {

// Frozen calibration artifacts: every generating process's numeric bundle and
// every (process, level, m-DAG) missingness spec. Produced once by the
// `calibrate` subcommand and shipped as a versioned JSON file; simulation
// runs and the acceptance suite load it instead of recalibrating.
struct Bundle {
  int version = 1;
  std::uint64_t seed = 0;
  std::map<int, dgp::Params> dgps;
  // key: "dgp<levelless id>/L<level>/<mdag>"
  std::map<std::string, missgen::MdagSpec> mdags;

  static std::string mdag_key(int dgp_id, int level, char mdag);
  const dgp::Params& dgp_params(int id) const;
  const missgen::MdagSpec& mdag_spec(int dgp_id, int level, char mdag) const;

  std::string fingerprint() const;  // stable content hash for manifests
};

void save_bundle(const Bundle& b, const std::string& path);
Bundle load_bundle(const std::string& path);

// full calibration pass over every process, level and m-DAG
Bundle calibrate_bundle(std::uint64_t seed, std::size_t n_panel = 200000,
                        bool verbose = false);

}  // namespace mdt
