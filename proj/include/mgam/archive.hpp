#pragma once

#include <iosfwd>
#include <string>

#include "mgam/config.hpp"
#include "mgam/em.hpp"

namespace mgam {

inline constexpr int archive_version = 1;

// Versioned fit snapshot: the model declaration, the built design stripped of
// its training rows (knot sites, constraint transforms and penalty blocks are
// kept, so new rows can be evaluated), and the fitted Gaussian posterior.
// Everything predict/simulate needs, nothing the optimizer kept for itself.
struct FitArchive {
    int version = archive_version;
    std::string fingerprint; // model_fingerprint(spec, response)
    std::string response;
    bool has_seed = false;
    std::uint64_t seed = 0;
    ModelSpec spec;
    ModelDesign design; // n = 0; X holds zero-row matrices of the right width
    FitResult fit;      // beta, lambda, posterior_cov, convergence record
};

FitArchive make_archive(const ModelConfig& config, const ModelDesign& design,
                        const FitResult& fit);

// JSON, one document per file. Doubles round-trip losslessly.
void write_archive(std::ostream& out, const FitArchive& archive);
void write_archive(const std::string& path, const FitArchive& archive);
FitArchive read_archive(std::istream& in, const std::string& origin);
FitArchive read_archive(const std::string& path);

} // namespace mgam
