// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnet/aggregator.hpp"
#include "mnet/numerics.hpp"

namespace mnet {

// quality_truth values written by the synthetic generator.
constexpr float kQualityClean = 1.0f;
constexpr float kQualityAberrant = 0.0f;

struct CorpusRecord {
  std::uint32_t identity_id = 0;
  std::uint32_t template_id = 0;
  std::uint32_t media_id = 0;
  float quality_truth = 0.0f;  // NaN when unknown
  std::vector<float> embedding;

  bool has_quality() const noexcept { return quality_truth == quality_truth; }
};

struct SplitManifest {
  std::vector<std::uint32_t> train_identities;
  std::vector<std::uint32_t> test_identities;
};

enum class Split { Train, Test };

/// Immutable collection of embedding records plus an identity/template index.
class Corpus {
 public:
  Corpus() = default;
  // Throws ConfigError if the records violate the corpus invariants.
  Corpus(std::uint32_t dim, std::vector<CorpusRecord> records);

  std::uint32_t dim() const noexcept { return dim_; }
  const std::vector<CorpusRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  // Sorted ascending.
  const std::vector<std::uint32_t>& identities() const noexcept { return identities_; }
  // Template ids of one identity, ascending. Empty for unknown identities.
  const std::vector<std::uint32_t>& templates_of(std::uint32_t identity) const;
  // Record indices of one template in file order. Throws ConfigError if unknown.
  const std::vector<std::size_t>& records_of(std::uint32_t template_id) const;
  bool has_template(std::uint32_t template_id) const;
  std::size_t template_count() const noexcept { return template_records_.size(); }

  std::optional<SplitManifest> split;

 private:
  std::uint32_t dim_ = 0;
  std::vector<CorpusRecord> records_;
  std::vector<std::uint32_t> identities_;
  std::map<std::uint32_t, std::vector<std::uint32_t>> identity_templates_;
  std::map<std::uint32_t, std::vector<std::size_t>> template_records_;
};

bool operator==(const Corpus& a, const Corpus& b);

/// Synthetic embedding corpus.
///
/// Every identity gets a random unit prototype. Clean members are
/// normalize(p + N(0, sigma_clean^2 I)). A clean member may additionally carry
/// a "pose" offset of length `content_strength` drawn from a rank
/// `content_subspace_rank` subspace shared by all identities. Aberrant
/// members are normalize(0.1 p + N(0, sigma_aberrant^2 I) + k u), where u is
/// a degradation direction shared by all identities and
/// k = degradation_strength * sigma_aberrant * sqrt(D), so poor media of
/// different people resemble each other.
struct SyntheticConfig {
  std::uint32_t num_identities = 50;
  std::uint32_t sets_per_identity = 20;
  std::uint32_t set_size_min = 3;
  std::uint32_t set_size_max = 8;
  std::uint32_t dim = 64;
  double prototype_norm = 1.0;
  double noise_sigma_clean = 0.1;
  double noise_sigma_aberrant = 1.0;
  double aberrant_fraction = 0.3;
  double degradation_strength = 1.0;
  std::uint32_t content_subspace_rank = 1;
  double content_fraction = 0.3;
  double content_strength = 2.5;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

constexpr double kAberrantShrink = 0.1;

// `prototypes`, when given, receives the identity prototypes in identity order.
Corpus generate_synthetic(const SyntheticConfig& config, std::vector<Vec>* prototypes = nullptr);

// Binary corpus encoding (little-endian, "MNEMB001").
std::string encode_corpus(const Corpus& corpus);
Corpus decode_corpus(std::string_view bytes);

// Sidecar manifest path: same basename with a .json extension.
std::filesystem::path manifest_path(const std::filesystem::path& corpus_path);
std::string encode_manifest(const SplitManifest& manifest);
SplitManifest decode_manifest(std::string_view json_text);

// Writes the corpus and, when present, its split manifest.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
// Reads the corpus and its manifest if the sidecar exists.
Corpus read_corpus(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

// One FaceSet built from records, promoted to 64-bit.
FaceSet make_face_set(const Corpus& corpus, std::span<const std::size_t> record_indices);

struct Template {
  std::uint32_t template_id = 0;
  FaceSet set;
  std::vector<std::size_t> record_indices;
};

/// All templates of the requested split, ascending by template id.
/// Throws ProtocolError if the corpus has no manifest or the splits share an
/// identity.
std::vector<Template> assemble_templates(const Corpus& corpus, Split split);

// Throws ProtocolError when train and test identities overlap.
void check_split_disjoint(const SplitManifest& manifest);

/// One epoch of identity-balanced training sets.
///
/// Identities are visited round-robin over a freshly shuffled order, so per
/// identity counts differ by at most one. Each set picks a random template of
/// its identity and draws `set_size` members from it, without replacement
/// when the template is large enough and with replacement otherwise.
std::vector<FaceSet> assemble_training_sets(const Corpus& corpus,
                                            std::span<const std::uint32_t> identities,
                                            std::size_t set_size, std::size_t num_sets, Rng& rng);

}  // namespace mnet
