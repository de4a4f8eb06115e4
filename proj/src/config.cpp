#include "topicssl/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "topicssl/error.hpp"
#include "topicssl/io.hpp"

namespace topicssl {

namespace {

template <class T>
T parse_value(std::string_view s, const std::string& key) {
  s = trim(s);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config: cannot parse '" + std::string(s) + "' for " + key);
  }
  return v;
}

template <class T>
std::string show(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    return std::to_string(v);
  }
}

template <class T>
std::vector<T> parse_list(std::string_view s, const std::string& key) {
  std::vector<T> out;
  if (trim(s).empty()) return out;
  for (const auto& tok : split(s, ',')) {
    if constexpr (std::is_same_v<T, std::string>) {
      out.emplace_back(trim(tok));
    } else {
      out.push_back(parse_value<T>(tok, key));
    }
  }
  return out;
}

template <class T>
std::string show_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += show(v[i]);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <class T>
Field scalar(std::string section, std::string key, T ExperimentConfig::*outer) {
  const std::string name = key;
  return {std::move(section), std::move(key),
          [outer](const ExperimentConfig& c) { return show(c.*outer); },
          [outer, name](ExperimentConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, std::string>) {
              c.*outer = std::string(trim(v));
            } else {
              c.*outer = parse_value<T>(v, name);
            }
          }};
}

// Field of a nested struct reached through a member-pointer accessor.
template <class Accessor, class T>
Field nested(std::string section, std::string key, Accessor acc, T member) {
  const std::string name = section + "." + key;
  using V = std::remove_cvref_t<decltype(acc(std::declval<ExperimentConfig&>()).*member)>;
  return {std::move(section), std::move(key),
          [acc, member](const ExperimentConfig& c) {
            const V& v = acc(c).*member;
            if constexpr (requires { v.begin(); } && !std::is_same_v<V, std::string>) {
              return show_list(v);
            } else {
              return show(v);
            }
          },
          [acc, member, name](ExperimentConfig& c, std::string_view s) {
            V& v = acc(c).*member;
            if constexpr (std::is_same_v<V, std::string>) {
              v = std::string(trim(s));
            } else if constexpr (requires { v.begin(); }) {
              v = parse_list<typename V::value_type>(s, name);
            } else {
              v = parse_value<V>(s, name);
            }
          }};
}

Field enum_field(std::string section, std::string key,
                 std::function<std::string(const ExperimentConfig&)> get,
                 std::function<void(ExperimentConfig&, std::string_view)> set) {
  return {std::move(section), std::move(key), std::move(get), std::move(set)};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    auto gen = [](auto& c) -> auto& { return c.generation; };
    auto tr = [](auto& c) -> auto& { return c.training; };
    auto opt = [](auto& c) -> auto& { return c.training.optimizer; };
    auto con = [](auto& c) -> auto& { return c.contrastive; };
    auto ora = [](auto& c) -> auto& { return c.oracle; };
    auto ev = [](auto& c) -> auto& { return c.evaluation; };
    std::vector<Field> v;
    v.push_back(scalar("", "seed", &ExperimentConfig::seed));
    v.push_back(scalar("", "out", &ExperimentConfig::out));

    v.push_back(nested("generation", "K", gen, &GenerationConfig::K));
    v.push_back(nested("generation", "V", gen, &GenerationConfig::V));
    v.push_back(nested("generation", "lambda", gen, &GenerationConfig::lambda));
    v.push_back(nested("generation", "min_length", gen, &GenerationConfig::min_length));
    v.push_back(enum_field(
        "generation", "topic_matrix",
        [](const ExperimentConfig& c) {
          return std::string(c.generation.topic_matrix == TopicMatrixKind::kGrouped ? "grouped" : "independent");
        },
        [](ExperimentConfig& c, std::string_view s) {
          s = trim(s);
          if (s == "grouped") c.generation.topic_matrix = TopicMatrixKind::kGrouped;
          else if (s == "independent") c.generation.topic_matrix = TopicMatrixKind::kIndependent;
          else throw ConfigError("config: topic_matrix must be 'independent' or 'grouped'");
        }));
    v.push_back(nested("generation", "alpha", gen, &GenerationConfig::alpha));
    v.push_back(nested("generation", "alpha_grid", gen, &GenerationConfig::alpha_grid));
    v.push_back(nested("generation", "prior", gen, &GenerationConfig::prior));
    v.push_back(nested("generation", "lda_alpha", gen, &GenerationConfig::lda_alpha));
    v.push_back(nested("generation", "ctm_diag", gen, &GenerationConfig::ctm_diag));
    v.push_back(nested("generation", "ctm_rho", gen, &GenerationConfig::ctm_rho));
    v.push_back(nested("generation", "pam_super", gen, &GenerationConfig::pam_super));
    v.push_back(nested("generation", "pam_alpha_super", gen, &GenerationConfig::pam_alpha_super));
    v.push_back(nested("generation", "pam_alpha_sub", gen, &GenerationConfig::pam_alpha_sub));

    v.push_back(nested("training", "t", tr, &TrainConfig::t));
    v.push_back(nested("training", "epochs", tr, &TrainConfig::epochs));
    v.push_back(nested("training", "batch_size", tr, &TrainConfig::batch_size));
    v.push_back(nested("training", "learning_rate", tr, &TrainConfig::learning_rate));
    v.push_back(nested("training", "lr_halve_patience", tr, &TrainConfig::lr_halve_patience));
    v.push_back(nested("training", "beta1", opt, &AmsGradConfig::beta1));
    v.push_back(nested("training", "beta2", opt, &AmsGradConfig::beta2));
    v.push_back(nested("training", "eps", opt, &AmsGradConfig::eps));
    v.push_back(nested("training", "weight_decay", opt, &AmsGradConfig::weight_decay));
    v.push_back(nested("training", "resample_every", tr, &TrainConfig::resample_every));
    v.push_back(nested("training", "targets_per_doc", tr, &TrainConfig::targets_per_doc));
    v.push_back(nested("training", "corpus_size", tr, &TrainConfig::corpus_size));
    v.push_back(nested("training", "val_size", tr, &TrainConfig::val_size));
    v.push_back(nested("training", "width", tr, &TrainConfig::width));
    v.push_back(nested("training", "num_blocks", tr, &TrainConfig::num_blocks));
    v.push_back(enum_field(
        "training", "activation",
        [](const ExperimentConfig& c) {
          return std::string(c.training.activation == Activation::kTanh ? "tanh" : "relu");
        },
        [](ExperimentConfig& c, std::string_view s) {
          s = trim(s);
          if (s == "relu") c.training.activation = Activation::kRelu;
          else if (s == "tanh") c.training.activation = Activation::kTanh;
          else throw ConfigError("config: activation must be 'relu' or 'tanh'");
        }));
    v.push_back(scalar("training", "checkpoint_every", &ExperimentConfig::checkpoint_every));

    v.push_back(nested("contrastive", "n_pairs", con, &ContrastiveConfig::n_pairs));
    v.push_back(nested("contrastive", "val_pairs", con, &ContrastiveConfig::val_pairs));
    v.push_back(nested("contrastive", "landmarks", con, &ContrastiveConfig::landmarks));
    v.push_back(nested("contrastive", "clamp", con, &ContrastiveConfig::clamp));

    v.push_back(nested("oracle", "n_samples", ora, &OracleConfig::n_samples));
    v.push_back(nested("oracle", "resample_threshold", ora, &OracleConfig::resample_threshold));
    v.push_back(nested("oracle", "min_ess", ora, &OracleConfig::min_ess));
    v.push_back(nested("oracle", "max_samples", ora, &OracleConfig::max_samples));

    v.push_back(nested("evaluation", "n_test_docs", ev, &EvaluationConfig::n_test_docs));
    v.push_back(nested("evaluation", "top_k", ev, &EvaluationConfig::top_k));
    v.push_back(nested("evaluation", "assumed_priors", ev, &EvaluationConfig::assumed_priors));
    v.push_back(nested("evaluation", "audit_topic", ev, &EvaluationConfig::audit_topic));
    v.push_back(nested("evaluation", "bootstrap", ev, &EvaluationConfig::bootstrap));
    return v;
  }();
  return f;
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& g = generation;
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(g.K >= 1 && g.V >= g.K, "need 1 <= K <= V");
  require(g.lambda > 0.0, "lambda must be positive");
  require(g.alpha > 0.0, "alpha must be positive");
  for (double a : g.alpha_grid) require(a > 0.0, "alpha_grid entries must be positive");
  require(g.prior == "pure" || g.prior == "lda" || g.prior == "ctm" || g.prior == "pam",
          "prior must be pure, lda, ctm or pam");
  for (const auto& p : evaluation.assumed_priors) {
    require(p == "pure" || p == "lda" || p == "ctm" || p == "pam", "unknown assumed prior '" + p + "'");
  }
  if (g.topic_matrix == TopicMatrixKind::kGrouped) require(g.K % 4 == 0, "grouped topics need K divisible by 4");
  if (training.t == 2) require(g.V <= 500, "t = 2 supports V <= 500");
  training.validate();
  require(oracle.n_samples > 0, "oracle n_samples must be positive");
  require(evaluation.n_test_docs > 0, "n_test_docs must be positive");
  for (auto k : evaluation.top_k) require(k >= 1 && k <= g.K, "top_k entries must lie in [1, K]");
  require(evaluation.audit_topic < g.K, "audit_topic must be below K");
  require(contrastive.n_pairs > 0, "n_pairs must be positive");
  require(contrastive.clamp > 0.0 && contrastive.clamp < 0.5, "clamp must lie in (0, 0.5)");
}

ExperimentConfig parse_config(std::string_view text) {
  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const auto& f : fields()) index[{f.section, f.key}] = &f;

  ExperimentConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config: malformed section header" + where);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      const bool known = std::any_of(index.begin(), index.end(), [&](const auto& e) { return e.first.first == section; });
      if (!known) throw ConfigError("config: unknown section [" + section + "]" + where);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config: expected key = value" + where);
    const std::string key(trim(line.substr(0, eq)));
    const auto it = index.find({section, key});
    if (it == index.end()) {
      throw ConfigError("config: unknown key '" + (section.empty() ? key : section + "." + key) + "'" + where);
    }
    it->second->set(cfg, line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace topicssl
