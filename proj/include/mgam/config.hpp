#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "mgam/design.hpp"
#include "mgam/em.hpp"

namespace mgam {

// Parsed fit configuration: the model declaration plus run settings.
//
// The file format is line-based. `#` starts a comment, blank lines are
// ignored. Top-level settings are `key = value` pairs:
//
//   family = gev            (required, before the first param block)
//   response = y            (default y)
//   seed = 42               threads = 1
//   tol = 1e-5              pll_tol = 1e-7
//   max_outer = 200         max_inner = 200
//   lambda0 = 1
//
// Each distribution parameter gets one block, opened by `param <name>` with
// the family's parameter names in order, holding term lines:
//
//   param location
//   smooth x1 k=10 kind=cr      (kind: cr | cc | tp; cyclic takes period=)
//   linear x9
//   offset base
//
// Unknown keys, unknown term options and misordered blocks are errors that
// carry `origin:line`.
struct ModelConfig {
    ModelSpec spec;
    std::string response = "y";
    EmSettings em;
    std::uint64_t seed = 0;
    bool has_seed = false;
    int threads = 0;
};

ModelConfig parse_config(std::istream& in, const std::string& origin);
ModelConfig read_config(const std::string& path);

// Canonical one-line-per-term rendering of the model declaration; equal
// declarations render identically.
std::string render_model(const ModelSpec& spec, const std::string& response);

// FNV-1a (64-bit, hex) over render_model. Archives embed it so a prediction
// run can detect an archive whose declaration was edited after fitting.
std::string model_fingerprint(const ModelSpec& spec, const std::string& response);

} // namespace mgam
