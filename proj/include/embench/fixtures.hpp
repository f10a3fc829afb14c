#pragma once

// Small synthetic benchmark suite: three datasets, two models, every task
// enabled with reduced knobs. Used by tests, the CLI `synth` command and demos.

#include <cstdint>
#include <string>

namespace embench {

// Writes manifests, embedding/token/mask files, PNG images and run.json under
// dir. Returns the path of run.json. Output is a pure function of seed.
std::string write_synthetic_suite(const std::string& dir, std::uint64_t seed = 0);

}  // namespace embench
