#ifndef PROMO_MODEL_IO_HPP_
#define PROMO_MODEL_IO_HPP_

// Versioned structured-text model files.  All parameter tensors are written
// row-major with explicit shapes and shortest-round-trip doubles, so
// save -> load -> predict is bit-identical.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "promo/dipn.hpp"
#include "promo/mlp.hpp"
#include "promo/textio.hpp"
#include "promo/train.hpp"

namespace promo {

using AnyModel = std::variant<DipnModel, MlpModel>;

inline std::string model_kind(const AnyModel& m) {
  return std::holds_alternative<DipnModel>(m) ? "dipn" : "mlp";
}
inline const IncentiveGrid& model_grid(const AnyModel& m) {
  return std::visit([](const auto& mm) -> const IncentiveGrid& { return mm.grid(); }, m);
}
inline std::vector<double> model_predict_curve(const AnyModel& m, const Features& x) {
  return std::visit([&](const auto& mm) { return mm.predict_curve(x); }, m);
}
inline double model_predict(const AnyModel& m, const Features& x, double incentive) {
  return std::visit([&](const auto& mm) { return mm.predict(x, incentive); }, m);
}
inline const std::array<int, kNumFeatureFields>& model_vocab(const AnyModel& m) {
  return std::visit(
      [](const auto& mm) -> const std::array<int, kNumFeatureFields>& {
        return mm.vocab_sizes();
      },
      m);
}

namespace detail {

inline void write_config_line(std::ostream& out, const TrainConfig& c) {
  out << "config lr " << format_double(c.learning_rate) << " epochs_bias " << c.epochs_bias
      << " epochs_uplift " << c.epochs_uplift << " batch " << c.batch_size << " alpha_upper "
      << format_double(c.alpha_upper) << " alpha_lower " << format_double(c.alpha_lower)
      << " alpha_decay " << format_double(c.alpha_decay) << " seed " << c.seed << " optimizer "
      << optimizer_name(c.optimizer) << '\n';
}

inline TrainConfig parse_config_line(const std::vector<std::string_view>& t) {
  TrainConfig c;
  if (t.size() != 19 || t[0] != "config") throw incompat_error("bad model config line");
  c.learning_rate = parse_double(t[2]);
  c.epochs_bias = static_cast<int>(parse_int(t[4]));
  c.epochs_uplift = static_cast<int>(parse_int(t[6]));
  c.batch_size = static_cast<int>(parse_int(t[8]));
  c.alpha_upper = parse_double(t[10]);
  c.alpha_lower = parse_double(t[12]);
  c.alpha_decay = parse_double(t[14]);
  c.seed = static_cast<std::uint64_t>(parse_int(t[16]));
  c.optimizer = optimizer_from_name(std::string(t[18]));
  return c;
}

inline void write_tensor(std::ostream& out, const std::string& name,
                         std::span<const double> data, std::size_t rows, std::size_t cols) {
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ' ';
      out << format_double(data[r * cols + c]);
    }
    out << '\n';
  }
}

// Reads a named tensor at `line`, copying into dst; advances `line`.
inline void read_tensor(const std::vector<std::string>& lines, std::size_t& line,
                        const std::string& name, std::span<double> dst, std::size_t rows,
                        std::size_t cols) {
  if (line >= lines.size()) throw incompat_error("model file truncated before " + name);
  const auto head = split_tokens(lines[line]);
  if (head.size() != 4 || head[0] != "tensor" || head[1] != name ||
      static_cast<std::size_t>(parse_int(head[2])) != rows ||
      static_cast<std::size_t>(parse_int(head[3])) != cols)
    throw incompat_error("expected 'tensor " + name + " " + std::to_string(rows) + " " +
                         std::to_string(cols) + "', got '" + lines[line] + "'");
  ++line;
  for (std::size_t r = 0; r < rows; ++r, ++line) {
    if (line >= lines.size()) throw incompat_error("model file truncated in " + name);
    const auto toks = split_tokens(lines[line]);
    if (toks.size() != cols) throw incompat_error("bad row width in tensor " + name);
    for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = parse_double(toks[c]);
  }
}

template <class Model>
void write_common(std::ostream& out, const Model& m, const std::string& kind) {
  out << "promo-model v1\n";
  out << "kind " << kind << '\n';
  out << "grid " << m.grid().size();
  for (const double d : m.grid().levels()) out << ' ' << format_double(d);
  out << '\n';
  out << "vocab " << m.vocab_sizes()[0] << ' ' << m.vocab_sizes()[1] << ' '
      << m.vocab_sizes()[2] << '\n';
  out << "embed_dim " << m.embed_dim() << '\n';
}

struct CommonHeader {
  std::vector<double> levels;
  std::array<int, kNumFeatureFields> vocab{};
  int embed_dim = 0;
  std::string kind;
  std::size_t next_line = 0;
};

inline CommonHeader read_common(const std::vector<std::string>& lines, const std::string& path) {
  expect_header(lines, "promo-model", 1, path);
  CommonHeader h;
  std::size_t i = 1;
  auto kind_t = split_tokens(lines.at(i++));
  if (kind_t.size() != 2 || kind_t[0] != "kind") throw incompat_error("bad kind line");
  h.kind = std::string(kind_t[1]);
  auto grid_t = split_tokens(lines.at(i++));
  if (grid_t.size() < 4 || grid_t[0] != "grid") throw incompat_error("bad grid line");
  const auto d = static_cast<std::size_t>(parse_int(grid_t[1]));
  if (grid_t.size() != d + 2) throw incompat_error("grid length mismatch");
  for (std::size_t j = 0; j < d; ++j) h.levels.push_back(parse_double(grid_t[j + 2]));
  auto vocab_t = split_tokens(lines.at(i++));
  if (vocab_t.size() != 4 || vocab_t[0] != "vocab") throw incompat_error("bad vocab line");
  for (int f = 0; f < kNumFeatureFields; ++f)
    h.vocab[f] = static_cast<int>(parse_int(vocab_t[f + 1]));
  auto ed_t = split_tokens(lines.at(i++));
  if (ed_t.size() != 2 || ed_t[0] != "embed_dim") throw incompat_error("bad embed_dim line");
  h.embed_dim = static_cast<int>(parse_int(ed_t[1]));
  h.next_line = i;
  return h;
}

}  // namespace detail

inline void save_model(const std::string& path, const DipnModel& m) {
  auto out = open_for_write(path);
  detail::write_common(out, m, "dipn");
  detail::write_config_line(out, m.train_config);
  const auto p = m.parameters();
  for (int f = 0; f < kNumFeatureFields; ++f)
    detail::write_tensor(out, "embed" + std::to_string(f),
                         p.subspan(m.embed_offset(f, 0),
                                   static_cast<std::size_t>(m.vocab_sizes()[f]) * m.embed_dim()),
                         m.vocab_sizes()[f], m.embed_dim());
  detail::write_tensor(out, "bias_u", p.subspan(m.bias_u_offset(), m.embed_dim()), 1,
                       m.embed_dim());
  detail::write_tensor(out, "bias_c", p.subspan(m.bias_c_offset(), 1), 1, 1);
  detail::write_tensor(out, "global_bias", p.subspan(m.global_bias_offset(), 1), 1, 1);
  detail::write_tensor(out, "uplift_w",
                       p.subspan(m.uplift_w_offset(0),
                                 m.num_uplift_weights() * m.uplift_in_dim()),
                       m.num_uplift_weights(), m.uplift_in_dim());
  detail::write_tensor(out, "uplift_c", p.subspan(m.uplift_c_offset(0), m.num_uplift_weights()),
                       1, m.num_uplift_weights());
}

inline void save_model(const std::string& path, const MlpModel& m) {
  auto out = open_for_write(path);
  detail::write_common(out, m, "mlp");
  out << "hidden " << m.hidden_widths().size();
  for (const int w : m.hidden_widths()) out << ' ' << w;
  out << '\n';
  detail::write_config_line(out, m.train_config);
  const auto p = m.parameters();
  for (int f = 0; f < kNumFeatureFields; ++f)
    detail::write_tensor(out, "embed" + std::to_string(f),
                         p.subspan(m.embed_offset(f, 0),
                                   static_cast<std::size_t>(m.vocab_sizes()[f]) * m.embed_dim()),
                         m.vocab_sizes()[f], m.embed_dim());
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    detail::write_tensor(out, "layer" + std::to_string(l) + "_w",
                         p.subspan(m.weight_offset(l),
                                   static_cast<std::size_t>(m.layer_in(l)) * m.layer_out(l)),
                         m.layer_out(l), m.layer_in(l));
    detail::write_tensor(out, "layer" + std::to_string(l) + "_b",
                         p.subspan(m.bias_offset(l), m.layer_out(l)), 1, m.layer_out(l));
  }
}

inline void save_model(const std::string& path, const AnyModel& m) {
  std::visit([&](const auto& mm) { save_model(path, mm); }, m);
}

inline AnyModel load_model(const std::string& path) {
  const auto lines = read_lines(path);
  const auto h = detail::read_common(lines, path);
  std::size_t i = h.next_line;
  if (h.kind == "dipn") {
    DipnModel m(IncentiveGrid(h.levels), h.vocab, h.embed_dim, 0);
    m.train_config = detail::parse_config_line(split_tokens(lines.at(i++)));
    auto p = m.parameters();
    for (int f = 0; f < kNumFeatureFields; ++f)
      detail::read_tensor(lines, i, "embed" + std::to_string(f),
                          p.subspan(m.embed_offset(f, 0),
                                    static_cast<std::size_t>(m.vocab_sizes()[f]) * m.embed_dim()),
                          m.vocab_sizes()[f], m.embed_dim());
    detail::read_tensor(lines, i, "bias_u", p.subspan(m.bias_u_offset(), m.embed_dim()), 1,
                        m.embed_dim());
    detail::read_tensor(lines, i, "bias_c", p.subspan(m.bias_c_offset(), 1), 1, 1);
    detail::read_tensor(lines, i, "global_bias", p.subspan(m.global_bias_offset(), 1), 1, 1);
    detail::read_tensor(lines, i, "uplift_w",
                        p.subspan(m.uplift_w_offset(0),
                                  m.num_uplift_weights() * m.uplift_in_dim()),
                        m.num_uplift_weights(), m.uplift_in_dim());
    detail::read_tensor(lines, i, "uplift_c",
                        p.subspan(m.uplift_c_offset(0), m.num_uplift_weights()), 1,
                        m.num_uplift_weights());
    return m;
  }
  if (h.kind == "mlp") {
    const auto hid_t = split_tokens(lines.at(i++));
    if (hid_t.size() < 2 || hid_t[0] != "hidden") throw incompat_error("bad hidden line");
    const auto nh = static_cast<std::size_t>(parse_int(hid_t[1]));
    if (hid_t.size() != nh + 2) throw incompat_error("hidden length mismatch");
    std::vector<int> hidden;
    for (std::size_t k = 0; k < nh; ++k)
      hidden.push_back(static_cast<int>(parse_int(hid_t[k + 2])));
    MlpModel m(IncentiveGrid(h.levels), h.vocab, h.embed_dim, hidden, 0);
    m.train_config = detail::parse_config_line(split_tokens(lines.at(i++)));
    auto p = m.parameters();
    for (int f = 0; f < kNumFeatureFields; ++f)
      detail::read_tensor(lines, i, "embed" + std::to_string(f),
                          p.subspan(m.embed_offset(f, 0),
                                    static_cast<std::size_t>(m.vocab_sizes()[f]) * m.embed_dim()),
                          m.vocab_sizes()[f], m.embed_dim());
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      detail::read_tensor(lines, i, "layer" + std::to_string(l) + "_w",
                          p.subspan(m.weight_offset(l),
                                    static_cast<std::size_t>(m.layer_in(l)) * m.layer_out(l)),
                          m.layer_out(l), m.layer_in(l));
      detail::read_tensor(lines, i, "layer" + std::to_string(l) + "_b",
                          p.subspan(m.bias_offset(l), m.layer_out(l)), 1, m.layer_out(l));
    }
    return m;
  }
  throw incompat_error("unknown model kind '" + h.kind + "' in " + path);
}

// Content checksum over kind, grid, vocabulary and every parameter; used to
// detect stale dual variables.
inline std::uint64_t model_checksum(const AnyModel& m) {
  std::uint64_t h = fnv1a64(model_kind(m));
  h = fnv1a64_doubles(model_grid(m).levels(), h);
  for (const int v : model_vocab(m)) h = fnv1a64(std::to_string(v), h);
  return std::visit(
      [&](const auto& mm) {
        std::uint64_t hh = h;
        for (const double d : mm.parameters()) hh = fnv1a64(format_double(d), fnv1a64(" ", hh));
        return hh;
      },
      m);
}

// Per-epoch metrics log: "epoch phase alpha train_loss val_loss" records.
inline void save_train_log(const std::string& path, const TrainLog& log) {
  auto out = open_for_write(path);
  out << "promo-trainlog v1\n";
  for (const auto& e : log)
    out << e.epoch << ' ' << e.phase << ' ' << format_double(e.alpha) << ' '
        << format_double(e.train_loss) << ' ' << format_double(e.val_loss) << '\n';
}

}  // namespace promo

#endif  // PROMO_MODEL_IO_HPP_
