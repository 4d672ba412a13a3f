#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rqa/common.hpp"
#include "rqa/rng.hpp"

namespace rqa {

enum class EducationLevel { high_school = 1, bachelor = 2, master = 3, doctor = 4 };

enum class Label { negative = -1, unlabeled = 0, positive = 1 };

inline const char* to_string(EducationLevel level) {
  switch (level) {
    case EducationLevel::high_school: return "high_school";
    case EducationLevel::bachelor: return "bachelor";
    case EducationLevel::master: return "master";
    case EducationLevel::doctor: return "doctor";
  }
  return "unknown";
}

inline EducationLevel education_from_string(const std::string& s) {
  if (s == "high_school") return EducationLevel::high_school;
  if (s == "bachelor") return EducationLevel::bachelor;
  if (s == "master") return EducationLevel::master;
  if (s == "doctor") return EducationLevel::doctor;
  throw ParseError("unknown education_level: '" + s + "'");
}

// One candidate record. num_positions = -1 means "derive from the number of
// work experiences"; Corpus construction resolves it.
struct Resume {
  std::string id;
  std::vector<std::string> skills;
  std::vector<std::string> work_experiences;
  EducationLevel education_level = EducationLevel::high_school;
  std::optional<int> university_rank;
  double years_working = 0.0;
  int num_awards = 0;
  int num_positions = -1;
  int num_entries = 0;
  Label label = Label::unlabeled;
};

struct LabelCounts {
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_unlabeled = 0;

  std::size_t labeled() const { return n_positive + n_negative; }
  std::size_t total() const { return labeled() + n_unlabeled; }
};

class Corpus {
 public:
  Corpus() = default;

  static Corpus from_resumes(std::vector<Resume> resumes) {
    Corpus corpus;
    corpus.resumes_ = std::move(resumes);
    for (std::size_t i = 0; i < corpus.resumes_.size(); ++i) {
      Resume& r = corpus.resumes_[i];
      validate(r);
      if (r.num_positions < 0) {
        r.num_positions = static_cast<int>(r.work_experiences.size());
      }
      if (!corpus.index_.emplace(r.id, i).second) {
        throw ValidationError("duplicate resume id: '" + r.id + "'");
      }
      switch (r.label) {
        case Label::positive: ++corpus.counts_.n_positive; break;
        case Label::negative: ++corpus.counts_.n_negative; break;
        case Label::unlabeled: ++corpus.counts_.n_unlabeled; break;
      }
    }
    return corpus;
  }

  const std::vector<Resume>& resumes() const { return resumes_; }
  const LabelCounts& counts() const { return counts_; }
  std::size_t size() const { return resumes_.size(); }
  bool empty() const { return resumes_.empty(); }

  const Resume* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &resumes_[it->second];
  }

  // ids in corpus order, so downstream shuffles are reproducible
  std::vector<std::string> labeled_ids() const {
    std::vector<std::string> ids;
    for (const Resume& r : resumes_) {
      if (r.label != Label::unlabeled) ids.push_back(r.id);
    }
    return ids;
  }

  std::vector<std::string> unlabeled_ids() const {
    std::vector<std::string> ids;
    for (const Resume& r : resumes_) {
      if (r.label == Label::unlabeled) ids.push_back(r.id);
    }
    return ids;
  }

 private:
  static void validate(const Resume& r) {
    if (r.id.empty()) throw ValidationError("resume with empty id");
    for (const std::string& s : r.skills) {
      if (s.empty()) {
        throw ValidationError("resume '" + r.id + "': empty skill string");
      }
    }
    for (const std::string& s : r.work_experiences) {
      if (s.empty()) {
        throw ValidationError("resume '" + r.id +
                              "': empty work experience string");
      }
    }
    if (r.university_rank && *r.university_rank < 1) {
      throw ValidationError("resume '" + r.id + "': university_rank < 1");
    }
    if (r.years_working < 0.0 || !std::isfinite(r.years_working)) {
      throw ValidationError("resume '" + r.id + "': bad years_working");
    }
    if (r.num_awards < 0 || r.num_entries < 0) {
      throw ValidationError("resume '" + r.id + "': negative count field");
    }
  }

  std::vector<Resume> resumes_;
  std::unordered_map<std::string, std::size_t> index_;
  LabelCounts counts_;
};

// ---------------------------------------------------------------------------
// Corpus file: one JSON object per line, schema fixed by the toolkit.

namespace detail {

inline const std::array<const char*, 10>& known_fields() {
  static const std::array<const char*, 10> fields = {
      "id",          "skills",       "work_experiences", "education_level",
      "university_rank", "years_working", "num_awards",   "num_positions",
      "num_entries", "label"};
  return fields;
}

inline Resume parse_resume_line(const std::string& line, std::size_t lineno,
                                std::vector<std::string>* warnings) {
  nlohmann::json rec;
  try {
    rec = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!rec.is_object()) {
    throw ParseError("line " + std::to_string(lineno) + ": not an object");
  }
  Resume r;
  try {
    r.id = rec.at("id").get<std::string>();
    r.skills = rec.at("skills").get<std::vector<std::string>>();
    r.work_experiences =
        rec.at("work_experiences").get<std::vector<std::string>>();
    r.education_level =
        education_from_string(rec.at("education_level").get<std::string>());
    if (rec.contains("university_rank") && !rec["university_rank"].is_null()) {
      r.university_rank = rec["university_rank"].get<int>();
    }
    r.years_working = rec.at("years_working").get<double>();
    r.num_awards = rec.at("num_awards").get<int>();
    if (rec.contains("num_positions") && !rec["num_positions"].is_null()) {
      r.num_positions = rec["num_positions"].get<int>();
      if (r.num_positions < 0) {
        throw ParseError("line " + std::to_string(lineno) +
                         ": num_positions < 0");
      }
    }
    r.num_entries = rec.at("num_entries").get<int>();
    int label = rec.at("label").get<int>();
    if (label != 1 && label != -1 && label != 0) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": label must be 1, -1 or 0");
    }
    r.label = static_cast<Label>(label);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
  }
  if (warnings) {
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      const auto& known = known_fields();
      if (std::find_if(known.begin(), known.end(), [&](const char* f) {
            return it.key() == f;
          }) == known.end()) {
        warnings->push_back("line " + std::to_string(lineno) +
                            ": ignoring unknown field '" + it.key() + "'");
      }
    }
  }
  return r;
}

}  // namespace detail

inline Corpus load_corpus(const std::filesystem::path& path,
                          std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::data, "cannot open corpus: " + path.string());
  }
  std::vector<Resume> resumes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    resumes.push_back(detail::parse_resume_line(line, lineno, warnings));
  }
  return Corpus::from_resumes(std::move(resumes));
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  for (const Resume& r : corpus.resumes()) {
    nlohmann::ordered_json rec;
    rec["id"] = r.id;
    rec["skills"] = r.skills;
    rec["work_experiences"] = r.work_experiences;
    rec["education_level"] = to_string(r.education_level);
    if (r.university_rank) {
      rec["university_rank"] = *r.university_rank;
    } else {
      rec["university_rank"] = nullptr;
    }
    rec["years_working"] = r.years_working;
    rec["num_awards"] = r.num_awards;
    rec["num_positions"] = r.num_positions;
    rec["num_entries"] = r.num_entries;
    rec["label"] = static_cast<int>(r.label);
    out << rec.dump() << "\n";
  }
  return out.str();
}

inline void save_corpus(const Corpus& corpus,
                        const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation.
//
// Each resume gets a latent quality u in [0,1] (positives u >= 0.7,
// negatives u <= 0.3, unlabeled uniform). Scalar features are noisy monotone
// functions of u. Skills and work experiences share per-topic phrase pools:
// high-u resumes draw their experiences mostly from their own skill set
// (high cross-part consistency), low-u resumes mostly from other topics.

namespace detail {

inline const std::vector<std::vector<std::string>>& topic_pools() {
  static const std::vector<std::vector<std::string>> pools = {
      {"distributed systems design", "microservices architecture",
       "rest api development", "continuous integration pipelines",
       "kubernetes cluster operations", "database schema design",
       "code review and mentoring", "performance profiling and tuning",
       "cloud infrastructure automation", "event driven messaging systems",
       "service reliability monitoring", "backend service development"},
      {"machine learning", "deep learning", "neural networks",
       "natural language processing", "computer vision", "feature engineering",
       "model evaluation and validation", "recommendation systems",
       "time series forecasting", "statistical data analysis",
       "large scale model training", "data labeling workflows"},
      {"financial statement analysis", "portfolio risk management",
       "derivatives pricing", "regulatory compliance reporting",
       "cash flow forecasting", "credit risk modeling",
       "internal audit procedures", "budget planning and control",
       "treasury operations", "investment due diligence",
       "tax planning strategies", "capital allocation reviews"},
      {"brand strategy development", "social media campaigns",
       "search engine optimization", "content marketing planning",
       "customer segmentation analysis", "email campaign automation",
       "market research surveys", "product launch coordination",
       "advertising budget management", "conversion funnel optimization",
       "influencer partnership programs", "loyalty program design"},
      {"patient care coordination", "clinical trial administration",
       "electronic health records management", "medical coding and billing",
       "healthcare quality assurance", "pharmacy inventory control",
       "telemedicine service rollout", "infection prevention protocols",
       "care plan documentation", "laboratory specimen processing",
       "medical device calibration", "health insurance claims review"},
      {"cad modeling and drafting", "finite element analysis",
       "hvac system design", "injection molding processes",
       "structural load calculations", "prototype fabrication",
       "tolerance stack-up analysis", "hydraulic system maintenance",
       "welding procedure qualification", "thermal management design",
       "vibration testing", "production line balancing"},
      {"user interface design", "user experience research",
       "design system maintenance", "wireframing and prototyping",
       "accessibility audits", "typography and layout",
       "usability testing sessions", "interaction design patterns",
       "visual identity refresh", "motion graphics production",
       "print production coordination", "illustration and iconography"},
      {"warehouse inventory optimization", "freight carrier negotiations",
       "route planning and scheduling", "customs documentation handling",
       "supply chain forecasting", "fleet maintenance programs",
       "order fulfillment operations", "vendor contract management",
       "cold chain monitoring", "demand planning models",
       "shipment tracking systems", "procurement cost analysis"}};
  return pools;
}

inline Resume synth_resume(Rng& rng, std::size_t serial, Label label) {
  const auto& pools = topic_pools();

  double u = 0.0;
  switch (label) {
    case Label::positive: u = 0.7 + 0.3 * rng.uniform01(); break;
    case Label::negative: u = 0.3 * rng.uniform01(); break;
    case Label::unlabeled: u = rng.uniform01(); break;
  }

  Resume r;
  {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "r%06zu", serial);
    r.id = buf;
  }
  r.label = label;

  const std::size_t topic = rng.index(pools.size());
  const auto& pool = pools[topic];

  auto clamp_int = [](double x, int lo, int hi) {
    int v = static_cast<int>(std::lround(x));
    return std::clamp(v, lo, hi);
  };

  // skills: distinct phrases from the resume's own topic
  const int n_skills = clamp_int(1.0 + 6.0 * u + rng.normal(0.0, 1.2), 1,
                                 static_cast<int>(pool.size()));
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (int i = 0; i < n_skills; ++i) r.skills.push_back(pool[order[i]]);

  // experiences: mostly restatements of own skills for high-u resumes,
  // phrases from a mismatched topic otherwise
  const int n_exp = clamp_int(1.0 + 2.5 * u + rng.normal(0.0, 0.8), 1, 5);
  const double p_match =
      std::clamp(0.05 + 0.85 * u + rng.normal(0.0, 0.08), 0.0, 1.0);
  for (int i = 0; i < n_exp; ++i) {
    if (rng.uniform01() < p_match) {
      r.work_experiences.push_back(r.skills[rng.index(r.skills.size())]);
    } else {
      std::size_t other = rng.index(pools.size() - 1);
      if (other >= topic) ++other;
      const auto& opool = pools[other];
      r.work_experiences.push_back(opool[rng.index(opool.size())]);
    }
  }

  r.years_working =
      std::clamp(12.0 * u + rng.normal(0.0, 2.5), 0.0, 40.0);
  r.years_working = std::round(r.years_working * 10.0) / 10.0;

  const double edu_latent = u + rng.normal(0.0, 0.18);
  if (edu_latent < 0.30) {
    r.education_level = EducationLevel::high_school;
  } else if (edu_latent < 0.55) {
    r.education_level = EducationLevel::bachelor;
  } else if (edu_latent < 0.80) {
    r.education_level = EducationLevel::master;
  } else {
    r.education_level = EducationLevel::doctor;
  }

  if (r.education_level != EducationLevel::high_school &&
      rng.uniform01() < 0.85) {
    const double spread = 0.5 + rng.uniform01();
    r.university_rank =
        clamp_int(1.0 + (1.0 - u) * 180.0 * spread, 1, 400);
  }

  r.num_awards = clamp_int(3.5 * u + rng.normal(0.0, 1.0), 0, 12);
  r.num_positions = n_exp + (rng.uniform01() < 0.25
                                 ? static_cast<int>(rng.index(3))
                                 : 0);
  r.num_entries = clamp_int(3.0 + 6.0 * u + rng.normal(0.0, 1.2), 0, 14);
  return r;
}

}  // namespace detail

inline Corpus generate_synthetic(int n_pos, int n_neg, int n_unlabeled,
                                 std::uint64_t seed) {
  if (n_pos < 0 || n_neg < 0 || n_unlabeled < 0) {
    throw ConfigError("synthetic corpus counts must be >= 0");
  }
  Rng rng(mix_seed(seed, 0x52514153594e5448ull));
  std::vector<Resume> resumes;
  resumes.reserve(static_cast<std::size_t>(n_pos + n_neg + n_unlabeled));
  std::size_t serial = 0;
  for (int i = 0; i < n_pos; ++i) {
    resumes.push_back(detail::synth_resume(rng, ++serial, Label::positive));
  }
  for (int i = 0; i < n_neg; ++i) {
    resumes.push_back(detail::synth_resume(rng, ++serial, Label::negative));
  }
  for (int i = 0; i < n_unlabeled; ++i) {
    resumes.push_back(detail::synth_resume(rng, ++serial, Label::unlabeled));
  }
  return Corpus::from_resumes(std::move(resumes));
}

// ---------------------------------------------------------------------------
// Fold planning for the cross-validation protocol.

struct FoldPlan {
  struct Roles {
    int test = 0;
    int validation = 0;
    std::vector<int> training;
  };

  std::uint64_t shuffle_seed = 0;
  int n_folds = 0;
  std::vector<std::vector<std::string>> folds;       // ids per fold
  std::unordered_map<std::string, int> assignments;  // id -> fold index
  std::vector<Roles> schedule;                       // indexed by test fold

  const std::vector<std::string>& test_ids(int test_fold) const {
    return folds[static_cast<std::size_t>(test_fold)];
  }
  const std::vector<std::string>& validation_ids(int test_fold) const {
    return folds[static_cast<std::size_t>(
        schedule[static_cast<std::size_t>(test_fold)].validation)];
  }
  std::vector<std::string> training_ids(int test_fold) const {
    std::vector<std::string> ids;
    for (int f : schedule[static_cast<std::size_t>(test_fold)].training) {
      const auto& fold = folds[static_cast<std::size_t>(f)];
      ids.insert(ids.end(), fold.begin(), fold.end());
    }
    return ids;
  }
};

// Shuffles the labeled ids with the given seed and deals them round-robin.
// For test fold t the validation fold is (t+1) mod n_folds and the remaining
// folds train.
inline FoldPlan plan_folds(const Corpus& corpus, int n_folds,
                           std::uint64_t shuffle_seed) {
  if (n_folds < 2) {
    throw ProtocolError("need at least 2 folds");
  }
  std::vector<std::string> ids = corpus.labeled_ids();
  if (ids.size() < static_cast<std::size_t>(n_folds)) {
    throw ProtocolError("only " + std::to_string(ids.size()) +
                        " labeled samples for " + std::to_string(n_folds) +
                        " folds");
  }
  Rng rng(shuffle_seed);
  rng.shuffle(ids);

  FoldPlan plan;
  plan.shuffle_seed = shuffle_seed;
  plan.n_folds = n_folds;
  plan.folds.resize(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int fold = static_cast<int>(i % static_cast<std::size_t>(n_folds));
    plan.folds[static_cast<std::size_t>(fold)].push_back(ids[i]);
    plan.assignments.emplace(ids[i], fold);
  }
  for (int t = 0; t < n_folds; ++t) {
    FoldPlan::Roles roles;
    roles.test = t;
    roles.validation = (t + 1) % n_folds;
    for (int f = 0; f < n_folds; ++f) {
      if (f != roles.test && f != roles.validation) roles.training.push_back(f);
    }
    plan.schedule.push_back(std::move(roles));
  }
  return plan;
}

}  // namespace rqa
