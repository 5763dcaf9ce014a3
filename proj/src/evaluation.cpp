// SPDX-License-Identifier: Apache-2.0
#include "mnet/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mnet/errors.hpp"
#include "mnet/parallel.hpp"

namespace mnet {

std::string PairProtocol::describe() const {
  if (kind == Kind::AllPairs) return "all_pairs";
  return "sampled(" + std::to_string(impostors_per_genuine) + "," + std::to_string(seed) + ")";
}

std::vector<VerificationPair> build_pairs(const std::vector<Template>& templates,
                                          const PairProtocol& protocol) {
  if (templates.size() < 2) throw ProtocolError("pair protocol needs at least 2 templates");
  std::set<std::uint32_t> ids;
  for (const auto& t : templates) ids.insert(t.set.identity);
  if (ids.size() < 2) throw ProtocolError("pair protocol needs at least 2 identities");

  std::vector<VerificationPair> all;
  std::vector<VerificationPair> genuine;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    for (std::size_t j = i + 1; j < templates.size(); ++j) {
      const bool same = templates[i].set.identity == templates[j].set.identity;
      VerificationPair p{templates[i].template_id, templates[j].template_id, same};
      if (same) genuine.push_back(p);
      if (protocol.kind == PairProtocol::Kind::AllPairs) all.push_back(p);
    }
  }
  if (genuine.empty()) throw ProtocolError("pair protocol produced no genuine pairs");
  if (protocol.kind == PairProtocol::Kind::AllPairs) return all;

  if (protocol.impostors_per_genuine < 1) throw ProtocolError("sampled protocol needs k >= 1");
  Rng rng(protocol.seed);
  std::vector<VerificationPair> out;
  out.reserve(genuine.size() * (1 + protocol.impostors_per_genuine));
  for (const auto& g : genuine) {
    out.push_back(g);
    for (std::size_t k = 0; k < protocol.impostors_per_genuine; ++k) {
      std::size_t a, b;
      do {
        a = static_cast<std::size_t>(rng.uniform_index(templates.size()));
        b = static_cast<std::size_t>(rng.uniform_index(templates.size()));
      } while (templates[a].set.identity == templates[b].set.identity);
      if (a > b) std::swap(a, b);
      out.push_back({templates[a].template_id, templates[b].template_id, false});
    }
  }
  return out;
}

std::vector<Vec> template_descriptors(const std::vector<Template>& templates,
                                      const GateParams& params, Mode mode, unsigned threads) {
  std::vector<Vec> out(templates.size());
  parallel_for(templates.size(), threads,
               [&](std::size_t i) { out[i] = aggregate(templates[i].set, params, mode).v_d; });
  return out;
}

PairScores score_pairs(const std::vector<VerificationPair>& pairs,
                       const std::vector<Template>& templates, const GateParams& params, Mode mode,
                       unsigned threads) {
  std::map<std::uint32_t, std::size_t> slot;
  for (std::size_t i = 0; i < templates.size(); ++i) slot[templates[i].template_id] = i;
  const auto descriptors = template_descriptors(templates, params, mode, threads);
  std::vector<bool> usable(descriptors.size());
  for (std::size_t i = 0; i < descriptors.size(); ++i) usable[i] = norm(descriptors[i]) > kNormEpsilon;

  auto lookup = [&](std::uint32_t tid) {
    auto it = slot.find(tid);
    if (it == slot.end()) throw ProtocolError("pair references unknown template " + std::to_string(tid));
    return it->second;
  };

  PairScores out;
  for (const auto& p : pairs) {
    const std::size_t a = lookup(p.template_a);
    const std::size_t b = lookup(p.template_b);
    if (!usable[a] || !usable[b]) {
      ++out.excluded;
      continue;
    }
    const double s = cosine_similarity(descriptors[a], descriptors[b]);
    (p.genuine ? out.genuine : out.impostor).push_back(s);
  }
  return out;
}

RocCurve roc(std::vector<double> genuine, std::vector<double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ProtocolError("roc needs at least one genuine and one impostor score");
  }
  RocCurve curve;
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());
  const double n_gen = static_cast<double>(genuine.size());
  const double n_imp = static_cast<double>(impostor.size());

  curve.points.push_back({0.0, 0.0});
  // Sweep thresholds from the top; g and i count scores >= threshold.
  std::size_t g = 0, i = 0;
  auto gen_at = [&](std::size_t k) { return genuine[genuine.size() - 1 - k]; };
  auto imp_at = [&](std::size_t k) { return impostor[impostor.size() - 1 - k]; };
  while (g < genuine.size() || i < impostor.size()) {
    double t = -std::numeric_limits<double>::infinity();
    if (g < genuine.size()) t = std::max(t, gen_at(g));
    if (i < impostor.size()) t = std::max(t, imp_at(i));
    while (g < genuine.size() && gen_at(g) >= t) ++g;
    while (i < impostor.size() && imp_at(i) >= t) ++i;
    curve.points.push_back({static_cast<double>(i) / n_imp, static_cast<double>(g) / n_gen});
  }
  curve.genuine_scores = std::move(genuine);
  curve.impostor_scores = std::move(impostor);
  return curve;
}

TarAtFar tar_at_far(const RocCurve& curve, double far_target) {
  if (!(far_target > 0.0 && far_target <= 1.0)) throw ConfigError("far_target must lie in (0, 1]");
  TarAtFar out;
  out.flagged = far_target < 1.0 / static_cast<double>(curve.impostor_scores.size());
  for (const auto& p : curve.points) {
    if (p.far <= far_target) out.tar = std::max(out.tar, p.tar);
  }
  return out;
}

bool operator==(const EvalReport& a, const EvalReport& b) {
  if (a.mode != b.mode || a.n_genuine != b.n_genuine || a.n_impostor != b.n_impostor ||
      a.excluded_pairs != b.excluded_pairs || a.config_hash != b.config_hash) {
    return false;
  }
  for (std::size_t k = 0; k < a.tar_at_far.size(); ++k) {
    if (a.tar_at_far[k].tar != b.tar_at_far[k].tar || a.tar_at_far[k].flagged != b.tar_at_far[k].flagged) {
      return false;
    }
  }
  return true;
}

EvalReport make_report(Mode mode, const RocCurve& curve, std::uint64_t excluded,
                       std::string config_hash) {
  EvalReport r;
  r.mode = mode;
  for (std::size_t k = 0; k < kReportFars.size(); ++k) r.tar_at_far[k] = tar_at_far(curve, kReportFars[k]);
  r.n_genuine = curve.genuine_scores.size();
  r.n_impostor = curve.impostor_scores.size();
  r.excluded_pairs = excluded;
  r.config_hash = std::move(config_hash);
  return r;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(mode_name(report.mode));
  nlohmann::ordered_json table;
  for (std::size_t k = 0; k < kReportFars.size(); ++k) {
    table[std::string(kReportFarKeys[k])] = {{"tar", report.tar_at_far[k].tar},
                                             {"flagged", report.tar_at_far[k].flagged}};
  }
  j["tar_at_far"] = table;
  j["n_genuine"] = report.n_genuine;
  j["n_impostor"] = report.n_impostor;
  j["excluded_pairs"] = report.excluded_pairs;
  j["config_hash"] = report.config_hash;
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(std::string_view text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.mode = parse_mode(j.at("mode").get<std::string>());
    for (std::size_t k = 0; k < kReportFars.size(); ++k) {
      const auto& entry = j.at("tar_at_far").at(std::string(kReportFarKeys[k]));
      r.tar_at_far[k].tar = entry.at("tar").get<double>();
      r.tar_at_far[k].flagged = entry.at("flagged").get<bool>();
    }
    r.n_genuine = j.at("n_genuine").get<std::uint64_t>();
    r.n_impostor = j.at("n_impostor").get<std::uint64_t>();
    r.excluded_pairs = j.at("excluded_pairs").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report json: ") + e.what());
  }
  return r;
}

namespace {

// Shortest representation that parses back to the same double.
std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

}  // namespace

std::string roc_csv(const RocCurve& curve) {
  std::string out = "far,tar\n";
  for (const auto& p : curve.points) {
    out += format_double(p.far);
    out += ',';
    out += format_double(p.tar);
    out += '\n';
  }
  return out;
}

std::vector<RocPoint> parse_roc_csv(std::string_view text) {
  std::vector<RocPoint> points;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (header) {
      if (line != "far,tar") throw ConfigError("roc csv: missing 'far,tar' header");
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ConfigError("roc csv: malformed line");
    RocPoint p;
    auto r1 = std::from_chars(line.data(), line.data() + comma, p.far);
    auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), p.tar);
    if (r1.ec != std::errc() || r2.ec != std::errc()) throw ConfigError("roc csv: malformed number");
    points.push_back(p);
  }
  return points;
}

std::filesystem::path report_json_path(const std::filesystem::path& prefix, Mode mode) {
  return prefix.string() + "." + std::string(mode_name(mode)) + ".json";
}

std::filesystem::path report_csv_path(const std::filesystem::path& prefix, Mode mode) {
  return prefix.string() + "." + std::string(mode_name(mode)) + ".csv";
}

std::vector<EvalReport> emit_report(const std::vector<ModeCurve>& curves,
                                    const std::filesystem::path& prefix) {
  if (curves.empty()) throw ConfigError("emit_report needs at least one curve");
  std::vector<EvalReport> reports;
  for (const auto& mc : curves) {
    auto report = make_report(mc.mode, mc.curve, mc.excluded, mc.config_hash);
    write_file_bytes(report_json_path(prefix, mc.mode), report_json(report));
    write_file_bytes(report_csv_path(prefix, mc.mode), roc_csv(mc.curve));
    reports.push_back(std::move(report));
  }
  return reports;
}

std::vector<MemberQuality> inspect_template(const Corpus& corpus, std::uint32_t template_id,
                                            const GateParams& params, Mode mode) {
  if (!corpus.has_template(template_id)) {
    throw UsageError("unknown template " + std::to_string(template_id));
  }
  const auto& recs = corpus.records_of(template_id);
  const auto set = make_face_set(corpus, recs);
  const auto out = aggregate(set, params, mode);
  std::vector<MemberQuality> rows(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = corpus.records()[recs[i]];
    rows[i] = {r.media_id, out.alpha[i], out.beta[i], out.gamma[i], r.quality_truth};
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MemberQuality& a, const MemberQuality& b) { return a.gamma > b.gamma; });
  return rows;
}

QualityCorrelation alpha_quality_correlation(const Corpus& corpus,
                                             const std::vector<Template>& templates,
                                             const GateParams& params, Mode mode) {
  QualityCorrelation out;
  double total = 0.0;
  for (const auto& t : templates) {
    Vec truth;
    for (std::size_t idx : t.record_indices) truth.push_back(corpus.records()[idx].quality_truth);
    if (std::any_of(truth.begin(), truth.end(), [](double q) { return std::isnan(q); })) continue;
    const auto alpha = aggregate(t.set, params, mode).alpha;
    const double rho = spearman(alpha, truth);
    if (std::isnan(rho)) continue;
    total += rho;
    ++out.sets_used;
  }
  out.mean = out.sets_used ? total / static_cast<double>(out.sets_used) : 0.0;
  return out;
}

}  // namespace mnet
