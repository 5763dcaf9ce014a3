// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mnet/aggregator.hpp"
#include "mnet/data.hpp"

namespace mnet {

struct VerificationPair {
  std::uint32_t template_a = 0;
  std::uint32_t template_b = 0;
  bool genuine = false;
};

struct PairProtocol {
  enum class Kind { AllPairs, Sampled };
  Kind kind = Kind::AllPairs;
  // Sampled: impostor pairs drawn per genuine pair.
  std::size_t impostors_per_genuine = 10;
  std::uint64_t seed = 1;

  std::string describe() const;
};

/// Genuine and impostor pairs over `templates`.
///
/// AllPairs enumerates every unordered pair (i < j in the given order).
/// Sampled keeps every genuine pair and draws `impostors_per_genuine`
/// distinct-identity pairs for each, uniformly with replacement.
/// Throws ProtocolError unless at least one genuine and one impostor pair
/// can be formed.
std::vector<VerificationPair> build_pairs(const std::vector<Template>& templates,
                                          const PairProtocol& protocol);

struct PairScores {
  std::vector<double> genuine;
  std::vector<double> impostor;
  std::uint64_t excluded = 0;  // pairs touching a zero-norm descriptor
};

// Descriptor of every template, aggregated once, in the order of `templates`.
std::vector<Vec> template_descriptors(const std::vector<Template>& templates,
                                      const GateParams& params, Mode mode, unsigned threads = 1);

PairScores score_pairs(const std::vector<VerificationPair>& pairs,
                       const std::vector<Template>& templates, const GateParams& params, Mode mode,
                       unsigned threads = 1);

struct RocPoint {
  double far = 0.0;
  double tar = 0.0;
};

/// Full ROC staircase.
///
/// Starts at (0, 0) for an infinite threshold, then has one point per
/// distinct score t (descending) with FAR = #{impostor >= t} / N_imp and
/// TAR = #{genuine >= t} / N_gen.
struct RocCurve {
  std::vector<double> genuine_scores;   // ascending
  std::vector<double> impostor_scores;  // ascending
  std::vector<RocPoint> points;
};

RocCurve roc(std::vector<double> genuine, std::vector<double> impostor);

struct TarAtFar {
  double tar = 0.0;
  // Target below the resolution 1/N_imp of the impostor set.
  bool flagged = false;
};

// TAR of the last staircase point whose FAR does not exceed the target.
TarAtFar tar_at_far(const RocCurve& curve, double far_target);

inline constexpr std::array<double, 5> kReportFars = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
inline constexpr std::array<std::string_view, 5> kReportFarKeys = {"1e-5", "1e-4", "1e-3", "1e-2",
                                                                   "1e-1"};

struct EvalReport {
  Mode mode = Mode::Avg;
  std::array<TarAtFar, 5> tar_at_far{};  // aligned with kReportFars
  std::uint64_t n_genuine = 0;
  std::uint64_t n_impostor = 0;
  std::uint64_t excluded_pairs = 0;
  std::string config_hash;
};

bool operator==(const EvalReport& a, const EvalReport& b);

EvalReport make_report(Mode mode, const RocCurve& curve, std::uint64_t excluded,
                       std::string config_hash);

std::string report_json(const EvalReport& report);
EvalReport parse_report_json(std::string_view text);
std::string roc_csv(const RocCurve& curve);
std::vector<RocPoint> parse_roc_csv(std::string_view text);

struct ModeCurve {
  Mode mode = Mode::Avg;
  RocCurve curve;
  std::uint64_t excluded = 0;
  std::string config_hash;
};

// File names written by emit_report for one mode.
std::filesystem::path report_json_path(const std::filesystem::path& prefix, Mode mode);
std::filesystem::path report_csv_path(const std::filesystem::path& prefix, Mode mode);

// Writes <prefix>.<mode>.json and <prefix>.<mode>.csv for every curve.
std::vector<EvalReport> emit_report(const std::vector<ModeCurve>& curves,
                                    const std::filesystem::path& prefix);

struct MemberQuality {
  std::uint32_t media_id = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  float quality_truth = 0.0f;  // NaN when absent
};

// Per-member scores of one template, sorted by gamma descending (ties keep
// file order).
std::vector<MemberQuality> inspect_template(const Corpus& corpus, std::uint32_t template_id,
                                            const GateParams& params, Mode mode);

struct QualityCorrelation {
  double mean = 0.0;
  std::size_t sets_used = 0;
};

// Mean Spearman correlation between alpha and quality_truth over templates
// whose members carry at least two distinct quality values.
QualityCorrelation alpha_quality_correlation(const Corpus& corpus,
                                             const std::vector<Template>& templates,
                                             const GateParams& params, Mode mode);

}  // namespace mnet
