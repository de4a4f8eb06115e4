#include "topicssl/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "topicssl/io.hpp"

namespace topicssl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("training: ") + what);
  };
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(lr_halve_patience > 0, "lr_halve_patience must be positive");
  require(resample_every > 0, "resample_every must be positive");
  require(targets_per_doc > 0, "targets_per_doc must be positive");
  require(corpus_size > 0, "corpus_size must be positive");
  require(val_size > 0, "val_size must be positive");
  require(t == 1 || t == 2, "t must be 1 or 2");
  require(width > 0, "width must be positive");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(optimizer.eps > 0.0, "eps must be positive");
  require(optimizer.weight_decay >= 0.0, "weight_decay must be nonnegative");
}

void finish_epoch(TrainState& state, EpochRecord rec, std::size_t patience) {
  state.history.push_back(rec);
  state.epochs_done = rec.epoch;
  if (rec.val_loss < state.best_val) {
    state.best_val = rec.val_loss;
    state.bad_epochs = 0;
  } else if (++state.bad_epochs >= patience) {
    state.lr *= 0.5;
    state.bad_epochs = 0;
  }
  const bool blown = !std::isfinite(rec.train_loss) ||
                     rec.train_loss > kDivergenceFactor * state.initial_loss;
  state.diverge_streak = blown ? state.diverge_streak + 1 : 0;
  if (state.diverge_streak >= kDivergenceEpochs) {
    throw DivergenceError("training diverged: loss above " + format_double(kDivergenceFactor) +
                              "x the initial loss for " + std::to_string(kDivergenceEpochs) +
                              " epochs",
                          state.history);
  }
}

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(v); }
  void vec(const Eigen::VectorXd& v) {
    out_.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * 8);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  Eigen::VectorXd vec(std::size_t n) {
    need(n * 8);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    std::memcpy(v.data(), in_.data() + pos_, n * 8);
    pos_ += n * 8;
    return v;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw IoError("checkpoint: truncated file");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "TSSLCKPT";
constexpr std::uint32_t kVersion = 1;
// Guards against absurd allocations from a corrupt header.
constexpr std::uint64_t kMaxParams = std::uint64_t{1} << 32;

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.objective));
  w.u64(c.V);
  w.u64(c.K);
  w.u64(static_cast<std::uint64_t>(c.t));
  const auto& s = c.model.shape();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.activation));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.head));
  w.u64(s.input_dim);
  w.u64(s.width);
  w.u64(s.num_blocks);
  w.u64(s.output_dim);
  w.u64(c.model.num_parameters());
  w.vec(c.model.parameters());
  w.put<std::uint8_t>(c.state ? 1 : 0);
  if (c.state) {
    const auto& st = *c.state;
    w.u64(st.epochs_done);
    w.f64(st.lr);
    w.f64(st.best_val);
    w.u64(st.bad_epochs);
    w.f64(st.initial_loss);
    w.u64(st.diverge_streak);
    w.u64(st.adam_steps);
    w.vec(st.adam_m);
    w.vec(st.adam_v);
    w.vec(st.adam_v_max);
    w.u64(st.history.size());
    for (const auto& r : st.history) {
      w.u64(r.epoch);
      w.f64(r.train_loss);
      w.f64(r.val_loss);
      w.f64(r.lr);
    }
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw IoError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  const auto objective = r.get<std::uint32_t>();
  if (objective > 1) throw IoError("checkpoint: unknown objective");
  c.objective = static_cast<Objective>(objective);
  c.V = r.u64();
  c.K = r.u64();
  c.t = static_cast<int>(r.u64());
  MlpShape s;
  const auto act = r.get<std::uint32_t>();
  const auto head = r.get<std::uint32_t>();
  if (act > 1 || head > 1) throw IoError("checkpoint: unknown activation or head");
  s.activation = static_cast<Activation>(act);
  s.head = static_cast<OutputHead>(head);
  s.input_dim = r.u64();
  s.width = r.u64();
  s.num_blocks = r.u64();
  s.output_dim = r.u64();
  const auto n = r.u64();
  if (n > kMaxParams) throw IoError("checkpoint: parameter count too large");
  c.model = MlpModel(s, r.vec(n));
  if (r.get<std::uint8_t>()) {
    TrainState st;
    st.epochs_done = r.u64();
    st.lr = r.f64();
    st.best_val = r.f64();
    st.bad_epochs = r.u64();
    st.initial_loss = r.f64();
    st.diverge_streak = r.u64();
    st.adam_steps = r.u64();
    st.adam_m = r.vec(n);
    st.adam_v = r.vec(n);
    st.adam_v_max = r.vec(n);
    const auto h = r.u64();
    if (h > (std::uint64_t{1} << 24)) throw IoError("checkpoint: history too long");
    for (std::uint64_t i = 0; i < h; ++i) {
      EpochRecord rec;
      rec.epoch = r.u64();
      rec.train_loss = r.f64();
      rec.val_loss = r.f64();
      rec.lr = r.f64();
      st.history.push_back(rec);
    }
    c.state = std::move(st);
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.lr) << '\n';
  }
  return out.str();
}

}  // namespace topicssl
