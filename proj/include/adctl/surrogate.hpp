#pragma once

// Learned replacements for BLT diagonal blocks: a hand-declared feature map,
// uniform sampling of the block's inputs, least-squares fitting and the
// substitution that turns the block into explicit assignments.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adctl/linalg.hpp"
#include "adctl/structural.hpp"

namespace adctl {

/// Named base quantities (expressions over model variables) and the features
/// built from them: products of at most two bases.
class FeatureMap {
public:
    FeatureMap() = default;

    /// `bases`: name -> expression text parsed against `sys`.
    /// `features`: strings such as "x1" or "x1*x4".
    FeatureMap(const EquationSystem& sys, std::vector<std::pair<std::string, std::string>> bases,
               const std::vector<std::string>& features);

    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<std::pair<std::string, std::string>>& bases() const noexcept { return base_text_; }
    std::size_t size() const noexcept { return names_.size(); }

    /// Feature expressions over the model's variables.
    const std::vector<Expr>& expressions() const noexcept { return exprs_; }

    /// Feature values given a full variable vector.
    std::vector<double> eval(std::span<const double> values) const;

private:
    std::vector<std::pair<std::string, std::string>> base_text_;
    std::vector<std::string> names_;
    std::vector<Expr> exprs_;
};

using Ranges = std::map<std::string, std::pair<double, double>>;

struct TrainingSet {
    std::vector<int> sampled;   // variable ids drawn uniformly
    std::vector<int> outputs;   // block unknowns
    std::vector<std::vector<double>> values;  // full variable vector per sample
    Matrix targets;             // samples x outputs
    std::uint64_t seed = 0;
    Ranges ranges;

    std::size_t size() const noexcept { return values.size(); }
};

struct LinearSurrogate {
    FeatureMap features;
    std::vector<std::string> outputs;
    Matrix weights;  // outputs x features

    /// Predicted block unknowns at a full variable vector.
    std::vector<double> predict(std::span<const double> values) const;
};

/// Index of the block that solves `unknown`.
std::size_t block_of(const CausalModel& model, const std::string& unknown);

/// Draws `n` samples of the block's ranged inputs, fills the remaining inputs
/// from upstream blocks and solves the block for each. Failed solves are
/// redrawn, up to 10n attempts.
TrainingSet sample_block(const CausalModel& model, std::size_t block, const Ranges& ranges, std::size_t n,
                         std::uint64_t seed);

/// Ordinary least squares per output via column-pivoted QR.
LinearSurrogate fit(const TrainingSet& ts, const FeatureMap& fm, const EquationSystem& sys);

/// Substitutes explicit surrogate equations for the block and re-sorts.
CausalModel replace_block(const CausalModel& model, std::size_t block, const LinearSurrogate& s);

/// Max over `m` fresh samples of the block residual max-norm at the surrogate's prediction.
double surrogate_residual(const LinearSurrogate& s, const CausalModel& model, std::size_t block,
                          const Ranges& ranges, std::size_t m, std::uint64_t seed);

std::string write_surrogate(const LinearSurrogate& s);
LinearSurrogate read_surrogate(const std::string& text, const EquationSystem& sys);

}  // namespace adctl
