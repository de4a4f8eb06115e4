#include "topicssl/experiment.hpp"

#include <cstdio>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "topicssl/error.hpp"
#include "topicssl/io.hpp"
#include "topicssl/parallel.hpp"
#include "topicssl/reconstruct.hpp"

namespace topicssl {

namespace fs = std::filesystem;

TopicWordMatrix make_topic_matrix(const ExperimentConfig& cfg) {
  const auto& g = cfg.generation;
  return gen_topic_word_matrix(g.topic_matrix, g.alpha, g.K, g.V, derive_seed(cfg.seed, stage::kTopicMatrix));
}

PriorSpec make_prior(const GenerationConfig& gen, const std::string& name) {
  if (name == "pure") return PriorSpec::pure(gen.K);
  if (name == "lda") return PriorSpec::lda(gen.K, gen.lda_alpha);
  if (name == "ctm") return PriorSpec::ctm(std::vector<double>(gen.K, 0.0), ctm_covariance(gen.K, gen.ctm_diag, gen.ctm_rho));
  if (name == "pam") return PriorSpec::pam(gen.K, gen.pam_super, gen.pam_alpha_super, gen.pam_alpha_sub);
  throw ConfigError("unknown prior '" + name + "'");
}

GenConfig make_gen_config(const ExperimentConfig& cfg) {
  GenConfig g;
  g.lambda = cfg.generation.lambda;
  g.min_length = cfg.generation.min_length;
  return g;
}

TrainConfig make_train_config(const ExperimentConfig& cfg, int threads) {
  TrainConfig t = cfg.training;
  t.seed = derive_seed(cfg.seed, stage::kTrain);
  t.threads = threads;
  return t;
}

OracleConfig make_oracle_config(const ExperimentConfig& cfg) {
  OracleConfig o = cfg.oracle;
  o.seed = derive_seed(cfg.seed, stage::kOracle);
  return o;
}

std::vector<Document> make_test_docs(const ExperimentConfig& cfg, const TopicWordMatrix& a,
                                     const PriorSpec& prior, int threads) {
  GenConfig g = make_gen_config(cfg);
  g.corpus_size = cfg.evaluation.n_test_docs;
  g.seed = derive_seed(cfg.seed, stage::kTestDocs);
  return make_corpus(a, prior, g, threads);
}

void cmd_generate(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
  const TopicWordMatrix a = make_topic_matrix(cfg);
  const PriorSpec prior = make_prior(cfg.generation, cfg.generation.prior);
  const auto docs = make_test_docs(cfg, a, prior, threads);

  write_file_atomic(out_dir / "topics.csv", serialize_topic_matrix(a.matrix()));
  CorpusHeader h{a.vocab_size(), a.num_topics(), prior.tag(), cfg.seed};
  write_corpus(out_dir / "test_corpus.csv", h, docs);

  const Svd s = svd(a.matrix());
  nlohmann::ordered_json meta;
  meta["V"] = a.vocab_size();
  meta["K"] = a.num_topics();
  meta["prior"] = prior.tag();
  meta["topic_matrix"] = cfg.generation.topic_matrix == TopicMatrixKind::kGrouped ? "grouped" : "independent";
  meta["alpha"] = cfg.generation.alpha;
  meta["seed"] = cfg.seed;
  meta["n_docs"] = docs.size();
  meta["rank"] = numerical_rank(a.matrix());
  meta["rank_check"] = numerical_rank(a.matrix()) == a.num_topics() ? "pass" : "fail";
  meta["smallest_singular_value"] = s.s.empty() ? 0.0 : s.s.back();
  meta["kappa_pinv"] = l1_cond_number(a.pinv());
  write_file_atomic(out_dir / "metadata.json", meta.dump(2) + "\n");
}

namespace {

std::string epoch_file(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.bin", epoch);
  return buf;
}

void log_epoch(std::ostream& log, const EpochRecord& r) {
  log << "epoch " << r.epoch << " train " << format_fixed(r.train_loss, 5) << " val "
      << format_fixed(r.val_loss, 5) << " lr " << format_double(r.lr) << '\n';
  log.flush();
}

template <class Trainer>
std::vector<EpochRecord> run_trainer(Trainer& trainer, MlpModel& model, Checkpoint proto,
                                     const ExperimentConfig& cfg, const fs::path& out_dir,
                                     std::ostream& log) {
  auto save = [&](const fs::path& path) {
    proto.model = model;
    proto.state = trainer.state();
    save_checkpoint(path, proto);
  };
  try {
    while (!trainer.done()) {
      const EpochRecord rec = trainer.run_epoch();
      log_epoch(log, rec);
      if (cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0) {
        save(out_dir / "checkpoints" / epoch_file(rec.epoch));
      }
    }
  } catch (const DivergenceError& e) {
    write_file_atomic(out_dir / "loss.csv", history_csv(e.history()));
    throw;
  }
  save(out_dir / "checkpoint.bin");
  auto history = trainer.state().history;
  write_file_atomic(out_dir / "loss.csv", history_csv(history));
  return history;
}

}  // namespace

std::vector<EpochRecord> cmd_train(const ExperimentConfig& cfg, Objective objective, const fs::path& out_dir,
                                   bool resume, int threads, std::ostream& log) {
  const TopicWordMatrix a = make_topic_matrix(cfg);
  const PriorSpec prior = make_prior(cfg.generation, cfg.generation.prior);
  const TrainConfig tc = make_train_config(cfg, threads);
  const std::size_t V = a.vocab_size();

  Checkpoint proto;
  proto.objective = objective;
  proto.V = V;
  proto.K = a.num_topics();
  proto.t = tc.t;

  std::optional<TrainState> state;
  MlpModel model;
  if (resume) {
    Checkpoint ck = load_checkpoint(out_dir / "checkpoint.bin");
    if (!ck.state) throw IoError("resume: checkpoint has no training state");
    if (ck.objective != objective || ck.V != V || ck.t != tc.t) {
      throw ConfigError("resume: checkpoint does not match the configuration");
    }
    model = std::move(ck.model);
    state = std::move(ck.state);
  } else {
    model = objective == Objective::kReconstruct ? make_reconstruct_model(V, tc) : make_contrastive_model(V, tc);
  }

  if (objective == Objective::kReconstruct) {
    ReconstructTrainer trainer(model, a, prior, make_gen_config(cfg), tc, std::move(state));
    return run_trainer(trainer, model, proto, cfg, out_dir, log);
  }
  const GenConfig gen = make_gen_config(cfg);
  const auto pairs = make_pairs(a, prior, tc.t, cfg.contrastive.n_pairs, gen, derive_seed(cfg.seed, stage::kPairs), threads);
  std::vector<ContrastivePair> val;
  if (cfg.contrastive.val_pairs > 0) {
    val = make_pairs(a, prior, tc.t, cfg.contrastive.val_pairs, gen, derive_seed(cfg.seed, stage::kValPairs), threads);
  }
  ContrastiveTrainer trainer(model, pairs, val, tc, std::move(state));
  return run_trainer(trainer, model, proto, cfg, out_dir, log);
}

EvaluateResult cmd_evaluate(const ExperimentConfig& cfg, Objective objective,
                            const std::optional<fs::path>& checkpoint, bool ideal, const fs::path& out_dir,
                            int threads) {
  if (!ideal && !checkpoint) throw ConfigError("evaluate: need a checkpoint or --ideal");
  const TopicWordMatrix a = make_topic_matrix(cfg);
  const PriorSpec prior = make_prior(cfg.generation, cfg.generation.prior);
  const OracleConfig oc = make_oracle_config(cfg);
  const auto docs = make_test_docs(cfg, a, prior, threads);
  const std::size_t n = docs.size();

  std::optional<Checkpoint> ck;
  int t = cfg.training.t;
  if (!ideal) {
    ck = load_checkpoint(*checkpoint);
    if (ck->objective != objective) throw ConfigError("evaluate: checkpoint objective differs from --objective");
    if (ck->V != a.vocab_size() || ck->K != a.num_topics()) {
      throw ConfigError("evaluate: checkpoint dimensions differ from the configuration");
    }
    t = ck->t;
  }

  EvaluateResult res;
  res.ssl_means.resize(n);
  if (objective == Objective::kReconstruct) {
    const PosteriorRecovery recovery(a, t);
    std::vector<std::vector<double>> f(n);
    if (ideal) {
      parallel_for(n, threads, [&](std::size_t i) {
        f[i] = ideal_reconstruct_predictor(a, prior, docs[i], t, oc, i);
      });
    } else {
      const Eigen::MatrixXd out = predict(ck->model, docs);
      for (std::size_t i = 0; i < n; ++i) {
        const auto col = out.col(static_cast<Eigen::Index>(i));
        f[i].assign(col.data(), col.data() + col.size());
      }
    }
    for (std::size_t i = 0; i < n; ++i) res.ssl_means[i] = recovery.recover(f[i]).mean().vector();

    RobustnessConfig rc;
    rc.bootstrap = cfg.evaluation.bootstrap;
    rc.seed = derive_seed(cfg.seed, stage::kEvaluate);
    rc.oracle = oc;
    rc.threads = threads;
    const std::size_t topic[] = {cfg.evaluation.audit_topic};
    res.audit = robustness_audit(a, prior, f, PolynomialTarget::monomial(a.num_topics(), t, topic), docs, rc);
    write_file_atomic(out_dir / "robustness.csv", robustness_csv(std::span(&*res.audit, 1)));
  } else {
    const std::size_t m = cfg.contrastive.landmarks > 0 ? cfg.contrastive.landmarks : int_pow(a.num_topics(), t);
    const LandmarkSet lm = build_landmarks(a, prior, t, m, oc, derive_seed(cfg.seed, stage::kLandmarks));
    write_file_atomic(out_dir / "landmarks.csv", landmarks_csv(lm));
    std::vector<std::vector<double>> reps(n);
    parallel_for(n, threads, [&](std::size_t i) {
      if (ideal) {
        reps[i] = ideal_landmark_representation(a, prior, lm, docs[i], oc, i);
      } else {
        reps[i] = landmark_representation(ck->model, lm, docs[i], cfg.contrastive.clamp);
        // Pure-prior negatives exclude w' = w; undo that in the odds.
        if (prior.is_pure()) {
          for (double& g : reps[i]) g = pure_rejection_to_ratio(g, a.num_topics());
        }
      }
      res.ssl_means[i] = clip_recovered(recover_from_landmarks(lm, reps[i])).mean().vector();
    });
    write_file_atomic(out_dir / "representation.csv", representation_csv(reps));
  }

  std::vector<PriorSpec> assumed;
  for (const auto& name : cfg.evaluation.assumed_priors) assumed.push_back(make_prior(cfg.generation, name));
  BenchmarkConfig bc;
  bc.top_k = cfg.evaluation.top_k;
  bc.alpha = cfg.generation.alpha;
  bc.seed = cfg.seed;
  bc.oracle = oc;
  bc.threads = threads;
  res.benchmark = misspecification_benchmark(a, prior, assumed, res.ssl_means, docs, bc);
  res.rows = res.benchmark.rows;
  write_file_atomic(out_dir / "eval.csv", eval_report_csv(res.rows));
  return res;
}

std::string oracle_csv(const std::vector<PosteriorTensor>& posts, int t) {
  std::ostringstream out;
  const std::size_t K = posts.empty() ? 0 : posts[0].tensor.side();
  out << "doc_id,estimator,n_samples,ess,low_ess";
  for (std::size_t k = 0; k < K; ++k) out << ",mean_" << k;
  for (std::size_t k = 0; k < K; ++k) out << ",se_" << k;
  if (t == 2) {
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) out << ",w_" << i << '_' << j;
  }
  out << '\n';
  for (std::size_t d = 0; d < posts.size(); ++d) {
    const auto& p = posts[d];
    const bool exact = p.estimator.kind == EstimatorInfo::Kind::kExact;
    out << d << ',' << (exact ? "exact" : "snis") << ',' << p.estimator.n_samples << ','
        << format_fixed(p.estimator.ess, 3) << ',' << (p.estimator.low_ess ? 1 : 0);
    for (double m : p.mean()) out << ',' << format_fixed(m, 10);
    for (std::size_t k = 0; k < K; ++k) {
      out << ',' << format_fixed(exact ? 0.0 : p.estimator.mean_std_error[k], 10);
    }
    if (t == 2) {
      for (double w : p.tensor.entries()) out << ',' << format_fixed(w, 10);
    }
    out << '\n';
  }
  return out.str();
}

void cmd_oracle(const ExperimentConfig& cfg, const fs::path& corpus_file, const fs::path& out_dir, int threads) {
  const TopicWordMatrix a = make_topic_matrix(cfg);
  const PriorSpec prior = make_prior(cfg.generation, cfg.generation.prior);
  const Corpus corpus = read_corpus(corpus_file);
  if (corpus.header.V != a.vocab_size() || corpus.header.K != a.num_topics()) {
    throw ConfigError("oracle: corpus dimensions differ from the configuration");
  }
  const OracleConfig oc = make_oracle_config(cfg);
  const int t = cfg.training.t;
  std::vector<PosteriorTensor> posts(corpus.docs.size());
  parallel_for(posts.size(), threads, [&](std::size_t i) {
    posts[i] = posterior_moment_tensor(a, prior, corpus.docs[i], t, oc, i);
  });
  write_file_atomic(out_dir / "oracle.csv", oracle_csv(posts, t));
}

void cmd_bench(const ExperimentConfig& cfg, Objective objective, const fs::path& out_dir, int threads,
               std::ostream& log) {
  std::vector<double> grid = cfg.generation.alpha_grid;
  if (grid.empty()) grid.push_back(cfg.generation.alpha);
  std::vector<EvalReport> all;
  for (double alpha : grid) {
    ExperimentConfig c = cfg;
    c.generation.alpha = alpha;
    const fs::path dir = out_dir / ("alpha_" + format_double(alpha));
    log << "== alpha " << format_double(alpha) << " -> " << dir.string() << '\n';
    cmd_generate(c, dir, threads);
    cmd_train(c, objective, dir, false, threads, log);
    auto res = cmd_evaluate(c, objective, dir / "checkpoint.bin", false, dir, threads);
    all.insert(all.end(), res.rows.begin(), res.rows.end());
  }
  write_file_atomic(out_dir / "bench.csv", eval_report_csv(all));
}

}  // namespace topicssl
