// SPDX-License-Identifier: Apache-2.0
#include "mnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mnet/errors.hpp"

namespace mnet {

namespace {

constexpr char kCorpusMagic[8] = {'M', 'N', 'E', 'M', 'B', '0', '0', '1'};
constexpr std::uint32_t kCorpusVersion = 1;
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8;
constexpr std::uint32_t kMaxDim = 1u << 20;

const std::vector<std::uint32_t> kNoTemplates;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t,
                                                                       std::int64_t>,
                                                    T>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t,
                                                                       std::int64_t>,
                                                    T>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

Vec random_unit(std::size_t dim, Rng& rng) {
  Vec v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm(v);
  } while (n < 1e-8);
  for (double& x : v) x /= n;
  return v;
}

// Orthonormal basis of a random rank-r subspace (Gram-Schmidt).
std::vector<Vec> random_subspace(std::size_t dim, std::size_t rank, Rng& rng) {
  std::vector<Vec> basis;
  while (basis.size() < rank) {
    Vec v = random_unit(dim, rng);
    for (const auto& b : basis) axpy(-dot(v, b), b, v);
    const double n = norm(v);
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

std::vector<float> to_unit_f32(const Vec& v) {
  const double n = norm(v);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

}  // namespace

Corpus::Corpus(std::uint32_t dim, std::vector<CorpusRecord> records)
    : dim_(dim), records_(std::move(records)) {
  if (dim_ == 0) throw ConfigError("corpus dimension must be positive");
  std::map<std::uint32_t, std::uint32_t> template_identity;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.embedding.size() != dim_) {
      throw ConfigError("record " + std::to_string(i) + " has dimension " +
                        std::to_string(r.embedding.size()) + ", corpus has " + std::to_string(dim_));
    }
    for (float x : r.embedding) {
      if (!std::isfinite(x)) throw ConfigError("record " + std::to_string(i) + " is not finite");
    }
    auto [it, inserted] = template_identity.emplace(r.template_id, r.identity_id);
    if (!inserted && it->second != r.identity_id) {
      throw ConfigError("template " + std::to_string(r.template_id) + " mixes identities");
    }
    template_records_[r.template_id].push_back(i);
  }
  for (const auto& [tid, identity] : template_identity) identity_templates_[identity].push_back(tid);
  for (const auto& [identity, tids] : identity_templates_) identities_.push_back(identity);
}

const std::vector<std::uint32_t>& Corpus::templates_of(std::uint32_t identity) const {
  auto it = identity_templates_.find(identity);
  return it == identity_templates_.end() ? kNoTemplates : it->second;
}

const std::vector<std::size_t>& Corpus::records_of(std::uint32_t template_id) const {
  auto it = template_records_.find(template_id);
  if (it == template_records_.end()) {
    throw ConfigError("unknown template " + std::to_string(template_id));
  }
  return it->second;
}

bool Corpus::has_template(std::uint32_t template_id) const {
  return template_records_.count(template_id) != 0;
}

bool operator==(const Corpus& a, const Corpus& b) {
  if (a.dim() != b.dim() || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.records()[i];
    const auto& y = b.records()[i];
    if (x.identity_id != y.identity_id || x.template_id != y.template_id ||
        x.media_id != y.media_id) {
      return false;
    }
    if (std::bit_cast<std::uint32_t>(x.quality_truth) != std::bit_cast<std::uint32_t>(y.quality_truth)) {
      return false;
    }
    if (x.embedding != y.embedding) return false;
  }
  return true;
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (num_identities < 1) fail("num_identities must be >= 1");
  if (sets_per_identity < 1) fail("sets_per_identity must be >= 1");
  if (set_size_min < 1 || set_size_max < set_size_min) fail("need 1 <= set_size_min <= set_size_max");
  if (dim < 1 || dim > kMaxDim) fail("dim out of range");
  if (!(prototype_norm > 0.0)) fail("prototype_norm must be > 0");
  if (!(noise_sigma_clean > 0.0) || !(noise_sigma_aberrant > 0.0)) fail("sigmas must be > 0");
  auto fraction = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!fraction(aberrant_fraction)) fail("aberrant_fraction must lie in [0, 1]");
  if (!fraction(content_fraction)) fail("content_fraction must lie in [0, 1]");
  if (!fraction(test_fraction)) fail("test_fraction must lie in [0, 1]");
  if (!(degradation_strength >= 0.0) || !(content_strength >= 0.0)) fail("strengths must be >= 0");
  if (content_subspace_rank < 1 || content_subspace_rank > dim) {
    fail("content_subspace_rank must lie in [1, dim]");
  }
}

Corpus generate_synthetic(const SyntheticConfig& cfg, std::vector<Vec>* prototypes) {
  cfg.validate();
  if (prototypes) prototypes->clear();
  Rng rng(cfg.seed);
  const std::size_t dim = cfg.dim;

  const Vec degradation = random_unit(dim, rng);
  const auto pose_basis = random_subspace(dim, cfg.content_subspace_rank, rng);
  const double degradation_scale =
      cfg.degradation_strength * cfg.noise_sigma_aberrant * std::sqrt(static_cast<double>(dim));

  std::vector<CorpusRecord> records;
  std::uint32_t template_id = 0;
  std::uint32_t media_id = 0;
  for (std::uint32_t identity = 0; identity < cfg.num_identities; ++identity) {
    Vec prototype = random_unit(dim, rng);
    for (double& x : prototype) x *= cfg.prototype_norm;
    if (prototypes) prototypes->push_back(prototype);
    for (std::uint32_t t = 0; t < cfg.sets_per_identity; ++t, ++template_id) {
      const auto span = cfg.set_size_max - cfg.set_size_min + 1;
      const auto size = cfg.set_size_min + static_cast<std::uint32_t>(rng.uniform_index(span));
      for (std::uint32_t m = 0; m < size; ++m) {
        CorpusRecord rec;
        rec.identity_id = identity;
        rec.template_id = template_id;
        rec.media_id = media_id++;
        Vec v(dim);
        if (rng.bernoulli(cfg.aberrant_fraction)) {
          rec.quality_truth = kQualityAberrant;
          for (std::size_t k = 0; k < dim; ++k) {
            v[k] = kAberrantShrink * prototype[k] + rng.normal(0.0, cfg.noise_sigma_aberrant) +
                   degradation_scale * degradation[k];
          }
        } else {
          rec.quality_truth = kQualityClean;
          for (std::size_t k = 0; k < dim; ++k) v[k] = prototype[k] + rng.normal(0.0, cfg.noise_sigma_clean);
          if (rng.bernoulli(cfg.content_fraction)) {
            Vec coeffs = random_unit(pose_basis.size(), rng);
            for (std::size_t j = 0; j < pose_basis.size(); ++j) {
              axpy(cfg.content_strength * coeffs[j], pose_basis[j], v);
            }
          }
        }
        rec.embedding = to_unit_f32(v);
        records.push_back(std::move(rec));
      }
    }
  }

  Corpus corpus(cfg.dim, std::move(records));

  std::vector<std::uint32_t> ids = corpus.identities();
  rng.shuffle(ids);
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * ids.size()));
  SplitManifest manifest;
  manifest.test_identities.assign(ids.end() - static_cast<std::ptrdiff_t>(n_test), ids.end());
  manifest.train_identities.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_test));
  std::sort(manifest.train_identities.begin(), manifest.train_identities.end());
  std::sort(manifest.test_identities.begin(), manifest.test_identities.end());
  corpus.split = std::move(manifest);
  return corpus;
}

std::string encode_corpus(const Corpus& corpus) {
  const std::size_t record_size = 16 + 4 * static_cast<std::size_t>(corpus.dim());
  std::string out;
  out.reserve(kHeaderSize + record_size * corpus.size());
  out.append(kCorpusMagic, sizeof(kCorpusMagic));
  put_le<std::uint32_t>(out, kCorpusVersion);
  put_le<std::uint32_t>(out, corpus.dim());
  put_le<std::uint64_t>(out, corpus.size());
  for (const auto& r : corpus.records()) {
    put_le(out, r.identity_id);
    put_le(out, r.template_id);
    put_le(out, r.media_id);
    put_le(out, r.quality_truth);
    for (float x : r.embedding) put_le(out, x);
  }
  return out;
}

Corpus decode_corpus(std::string_view bytes) {
  using Kind = ParseError::Kind;
  if (bytes.size() < sizeof(kCorpusMagic) ||
      std::memcmp(bytes.data(), kCorpusMagic, sizeof(kCorpusMagic)) != 0) {
    throw ParseError(Kind::BadMagic, "corpus: magic mismatch, expected MNEMB001", 0);
  }
  if (bytes.size() < kHeaderSize) {
    throw ParseError(Kind::Truncated, "corpus: header truncated", bytes.size());
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCorpusVersion) {
    throw ParseError(Kind::BadVersion, "corpus: unsupported version " + std::to_string(version), 8);
  }
  const auto dim = get_le<std::uint32_t>(bytes, 12);
  if (dim == 0 || dim > kMaxDim) {
    throw ParseError(Kind::BadDimension, "corpus: invalid dimension " + std::to_string(dim), 12);
  }
  const auto count = get_le<std::uint64_t>(bytes, 16);
  const std::uint64_t record_size = 16 + 4ull * dim;
  const std::uint64_t available = bytes.size() - kHeaderSize;
  if (available / record_size < count) {
    const std::uint64_t complete = available / record_size;
    throw ParseError(Kind::Truncated,
                     "corpus: header declares " + std::to_string(count) + " records but only " +
                         std::to_string(complete) + " are present",
                     kHeaderSize + complete * record_size);
  }
  if (available != count * record_size) {
    throw ParseError(Kind::Truncated,
                     "corpus: header declares " + std::to_string(count) +
                         " records but the file holds more data",
                     kHeaderSize + count * record_size);
  }

  std::vector<CorpusRecord> records(count);
  std::map<std::uint32_t, std::uint32_t> template_identity;
  std::size_t at = kHeaderSize;
  for (auto& r : records) {
    const std::size_t record_start = at;
    r.identity_id = get_le<std::uint32_t>(bytes, at);
    r.template_id = get_le<std::uint32_t>(bytes, at + 4);
    r.media_id = get_le<std::uint32_t>(bytes, at + 8);
    r.quality_truth = get_le<float>(bytes, at + 12);
    at += 16;
    r.embedding.resize(dim);
    for (auto& x : r.embedding) {
      x = get_le<float>(bytes, at);
      if (!std::isfinite(x)) throw ParseError(Kind::NonFinite, "corpus: non-finite embedding value", at);
      at += 4;
    }
    auto [it, inserted] = template_identity.emplace(r.template_id, r.identity_id);
    if (!inserted && it->second != r.identity_id) {
      throw ParseError(Kind::Inconsistent,
                       "corpus: template " + std::to_string(r.template_id) + " mixes identities",
                       record_start);
    }
  }
  return Corpus(dim, std::move(records));
}

std::filesystem::path manifest_path(const std::filesystem::path& corpus_path) {
  auto p = corpus_path;
  p.replace_extension(".json");
  return p;
}

std::string encode_manifest(const SplitManifest& manifest) {
  nlohmann::ordered_json j;
  j["train_identities"] = manifest.train_identities;
  j["test_identities"] = manifest.test_identities;
  return j.dump(2) + "\n";
}

SplitManifest decode_manifest(std::string_view json_text) {
  SplitManifest m;
  try {
    const auto j = nlohmann::json::parse(json_text);
    m.train_identities = j.at("train_identities").get<std::vector<std::uint32_t>>();
    m.test_identities = j.at("test_identities").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("split manifest: ") + e.what());
  }
  return m;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_bytes(path, encode_corpus(corpus));
  if (corpus.split) write_file_bytes(manifest_path(path), encode_manifest(*corpus.split));
}

Corpus read_corpus(const std::filesystem::path& path) {
  Corpus corpus = decode_corpus(read_file_bytes(path));
  const auto sidecar = manifest_path(path);
  if (std::filesystem::exists(sidecar)) corpus.split = decode_manifest(read_file_bytes(sidecar));
  return corpus;
}

FaceSet make_face_set(const Corpus& corpus, std::span<const std::size_t> record_indices) {
  if (record_indices.empty()) throw ConfigError("face set needs at least one record");
  FaceSet set;
  set.identity = corpus.records().at(record_indices.front()).identity_id;
  set.members.reserve(record_indices.size());
  for (std::size_t idx : record_indices) {
    const auto& r = corpus.records().at(idx);
    set.members.emplace_back(r.embedding.begin(), r.embedding.end());
  }
  return set;
}

void check_split_disjoint(const SplitManifest& manifest) {
  const std::set<std::uint32_t> train(manifest.train_identities.begin(),
                                      manifest.train_identities.end());
  for (std::uint32_t id : manifest.test_identities) {
    if (train.count(id)) {
      throw ProtocolError("identity " + std::to_string(id) +
                          " appears in both the train and test splits");
    }
  }
}

std::vector<Template> assemble_templates(const Corpus& corpus, Split split) {
  if (!corpus.split) throw ProtocolError("corpus has no split manifest");
  check_split_disjoint(*corpus.split);
  const auto& ids = split == Split::Train ? corpus.split->train_identities
                                          : corpus.split->test_identities;
  std::vector<std::uint32_t> template_ids;
  for (std::uint32_t id : ids) {
    const auto& tids = corpus.templates_of(id);
    template_ids.insert(template_ids.end(), tids.begin(), tids.end());
  }
  std::sort(template_ids.begin(), template_ids.end());
  std::vector<Template> out;
  out.reserve(template_ids.size());
  for (std::uint32_t tid : template_ids) {
    Template t;
    t.template_id = tid;
    t.record_indices = corpus.records_of(tid);
    t.set = make_face_set(corpus, t.record_indices);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<FaceSet> assemble_training_sets(const Corpus& corpus,
                                            std::span<const std::uint32_t> identities,
                                            std::size_t set_size, std::size_t num_sets, Rng& rng) {
  if (corpus.size() == 0) throw ConfigError("cannot assemble training sets from an empty corpus");
  if (identities.empty()) throw ConfigError("no identities to sample training sets from");
  if (set_size < 1) throw ConfigError("set size must be >= 1");
  for (std::uint32_t id : identities) {
    if (corpus.templates_of(id).empty()) {
      throw ConfigError("identity " + std::to_string(id) + " has no records");
    }
  }

  std::vector<std::uint32_t> cycle(identities.begin(), identities.end());
  std::vector<FaceSet> sets;
  sets.reserve(num_sets);
  std::size_t pos = cycle.size();
  std::vector<std::size_t> picked;
  while (sets.size() < num_sets) {
    if (pos == cycle.size()) {
      rng.shuffle(cycle);
      pos = 0;
    }
    const std::uint32_t identity = cycle[pos++];
    const auto& tids = corpus.templates_of(identity);
    const auto& recs = corpus.records_of(tids[rng.uniform_index(tids.size())]);
    picked.clear();
    if (recs.size() >= set_size) {
      std::vector<std::size_t> pool = recs;
      for (std::size_t k = 0; k < set_size; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.uniform_index(pool.size() - k));
        std::swap(pool[k], pool[j]);
        picked.push_back(pool[k]);
      }
    } else {
      for (std::size_t k = 0; k < set_size; ++k) picked.push_back(recs[rng.uniform_index(recs.size())]);
    }
    sets.push_back(make_face_set(corpus, picked));
  }
  return sets;
}

}  // namespace mnet
