#include "dsiforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "dsiforge/error.hpp"

namespace dsi {

std::string_view to_string(BowWeighting w) {
  return w == BowWeighting::kUniform ? "uniform" : "tfidf";
}

BowWeighting parse_bow_weighting(std::string_view s) {
  if (s == "uniform") return BowWeighting::kUniform;
  if (s == "tfidf" || s == "tf-idf") return BowWeighting::kTfidf;
  throw ConfigError("unknown bow_weighting '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (num_states < 2) throw ConfigError("model.num_states must be >= 2");
  if (vocab_size < 5) throw ConfigError("model.vocab_size must be >= 5");
  if (embed_dim == 0 || encoder_dim == 0 || dialog_dim == 0 || decoder_dim == 0 ||
      bow_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(lambda_bow >= 0.0)) throw ConfigError("model.lambda_bow must be >= 0");
  if (!(tfidf_alpha >= 0.0 && tfidf_alpha <= 1.0)) {
    throw ConfigError("model.tfidf_alpha must lie in [0, 1]");
  }
  if (!(gumbel_tau >= 0.0)) throw ConfigError("model.gumbel_tau must be >= 0");
  if (max_utterance_len == 0 || max_dialog_len == 0) {
    throw ConfigError("model.max_utterance_len and max_dialog_len must be positive");
  }
  if (kl_mode != "standard") {
    throw ConfigError("model.kl_mode '" + kl_mode + "' is not implemented (use \"standard\")");
  }
}

std::size_t DialogBatch::utterance_count() const {
  return std::accumulate(dialog_lengths.begin(), dialog_lengths.end(), std::size_t{0});
}

std::vector<std::size_t> DialogBatch::utterance(std::size_t b, std::size_t t) const {
  const std::size_t len = token_lengths[b * max_turns + t];
  std::vector<std::size_t> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = token_at(b, t, i);
  return out;
}

DialogBatch make_batch(const std::vector<const Dialog*>& dialogs, const Vocabulary& vocab,
                       const ModelConfig& cfg, const std::vector<int>* labels) {
  if (dialogs.empty()) throw ConfigError("make_batch: no dialogs");
  DialogBatch batch;
  batch.batch_size = dialogs.size();
  for (const Dialog* d : dialogs) {
    if (d->turns.empty()) throw ConfigError("dialog '" + d->id + "' has no turns");
    const std::size_t len = std::min(d->turns.size(), cfg.max_dialog_len);
    batch.dialog_lengths.push_back(len);
    batch.max_turns = std::max(batch.max_turns, len);
    for (std::size_t t = 0; t < len; ++t) {
      if (d->turns[t].tokens.empty()) {
        throw ConfigError("dialog '" + d->id + "' turn " + std::to_string(t) +
                          " is an all-padding utterance");
      }
      batch.max_tokens =
          std::max(batch.max_tokens, std::min(d->turns[t].tokens.size(), cfg.max_utterance_len));
    }
  }
  const std::size_t n_utt = batch.utterance_count();
  if (labels != nullptr && labels->size() != n_utt) {
    throw ConfigError("make_batch: expected " + std::to_string(n_utt) + " labels, got " +
                      std::to_string(labels->size()));
  }
  batch.tokens.assign(batch.batch_size * batch.max_turns * batch.max_tokens, Vocabulary::kPad);
  batch.token_lengths.assign(batch.batch_size * batch.max_turns, 0);
  batch.speakers.assign(batch.batch_size * batch.max_turns, 0);
  batch.labels.assign(batch.batch_size * batch.max_turns, -1);
  std::size_t u = 0;
  for (std::size_t b = 0; b < dialogs.size(); ++b) {
    for (std::size_t t = 0; t < batch.dialog_lengths[b]; ++t, ++u) {
      const Turn& turn = dialogs[b]->turns[t];
      const std::size_t len = std::min(turn.tokens.size(), cfg.max_utterance_len);
      const std::size_t slot = b * batch.max_turns + t;
      batch.token_lengths[slot] = len;
      batch.speakers[slot] = turn.speaker;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t id = vocab.id(turn.tokens[i]);
        if (id >= cfg.vocab_size) {
          throw ConfigError("token id " + std::to_string(id) + " exceeds model vocabulary");
        }
        batch.tokens[slot * batch.max_tokens + i] = id;
      }
      if (labels != nullptr) {
        const int y = (*labels)[u];
        if (y < -1 || y >= static_cast<int>(cfg.num_states)) {
          throw ConfigError("make_batch: label " + std::to_string(y) + " outside [-1, " +
                            std::to_string(cfg.num_states) + ")");
        }
        batch.labels[slot] = y;
      }
    }
  }
  return batch;
}

std::vector<double> tfidf_weights(const DialogCorpus& corpus, const Vocabulary& vocab,
                                  double alpha) {
  const std::size_t v = vocab.size();
  if (v == 0) throw ConfigError("tfidf_weights: empty vocabulary");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("tfidf_weights: alpha outside [0,1]");
  std::vector<double> tf(v, 0.0), df(v, 0.0);
  std::size_t docs = 0;
  std::vector<std::size_t> seen(v, static_cast<std::size_t>(-1));
  for (const Dialog& d : corpus.dialogs) {
    for (const Turn& turn : d.turns) {
      for (const std::string& tok : turn.tokens) {
        const std::size_t id = vocab.id(tok);
        tf[id] += 1.0;
        if (seen[id] != docs) {
          seen[id] = docs;
          df[id] += 1.0;
        }
      }
      ++docs;
    }
  }
  if (docs == 0) throw ConfigError("tfidf_weights: empty corpus");
  std::vector<double> raw(v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    if (df[i] > 0.0) raw[i] = tf[i] * std::log(1.0 + static_cast<double>(docs) / df[i]);
    total += raw[i];
  }
  const double uniform = (1.0 - alpha) / static_cast<double>(v);
  std::vector<double> w(v);
  for (std::size_t i = 0; i < v; ++i) {
    w[i] = total > 0.0 ? uniform + alpha * raw[i] / total : 1.0 / static_cast<double>(v);
  }
  return w;
}

std::vector<double> uniform_weights(std::size_t vocab_size) {
  if (vocab_size == 0) throw ConfigError("uniform_weights: empty vocabulary");
  return std::vector<double>(vocab_size, 1.0 / static_cast<double>(vocab_size));
}

bool LossBreakdown::finite() const {
  return std::isfinite(reconstruction) && std::isfinite(kl) && std::isfinite(bow) &&
         std::isfinite(ce) && std::isfinite(constraint) && std::isfinite(total);
}

std::string LossBreakdown::to_string() const {
  std::ostringstream out;
  out.precision(6);
  out << "recon=" << reconstruction << " kl=" << kl << " bow=" << bow << " ce=" << ce
      << " constraint=" << constraint << " total=" << total;
  return out.str();
}

namespace {

constexpr double kLogPriorFloor = -23.025850929940457;  // log(1e-10)

/// Graph-building context: one parameter node per name, cached ones columns.
class Net {
 public:
  Net(ad::Graph& g, const ModelConfig& cfg, const ParameterStore& params)
      : g_(g), cfg_(cfg), params_(params) {}

  ad::Graph& g() { return g_; }

  ad::NodeId param(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    ad::NodeId id = g_.parameter(name, params_.get(name).shape);
    cache_.emplace(name, id);
    return id;
  }

  ad::NodeId ones(std::size_t rows) {
    auto it = ones_.find(rows);
    if (it != ones_.end()) return it->second;
    ad::NodeId id = g_.constant(Tensor({rows, 1}, 1.0));
    ones_.emplace(rows, id);
    return id;
  }

  ad::NodeId bias(const std::string& name, std::size_t rows) {
    return g_.matmul(ones(rows), param(name));
  }

  ad::NodeId linear(const std::string& prefix, ad::NodeId x, std::size_t rows) {
    return g_.add(g_.matmul(x, param(prefix + ".W")), bias(prefix + ".b", rows));
  }

  ad::NodeId gru(const std::string& p, ad::NodeId x, ad::NodeId h, std::size_t rows) {
    auto gate = [&](const char* k) {
      return g_.add(g_.add(g_.matmul(x, param(p + ".W" + k)), g_.matmul(h, param(p + ".U" + k))),
                    bias(p + ".b" + k, rows));
    };
    ad::NodeId z = g_.sigmoid(gate("z"));
    ad::NodeId r = g_.sigmoid(gate("r"));
    ad::NodeId n = g_.tanh(g_.add(
        g_.add(g_.matmul(x, param(p + ".Wn")), g_.matmul(g_.mul(r, h), param(p + ".Un"))),
        bias(p + ".bn", rows)));
    return g_.add(n, g_.mul(z, g_.sub(h, n)));
  }

  /// Encodes `rows` utterances given as padded token rows; padded steps keep
  /// the previous state.
  ad::NodeId encode(const std::vector<std::vector<std::size_t>>& utts) {
    const std::size_t rows = utts.size();
    const std::size_t h_dim = cfg_.encoder_dim;
    std::size_t steps = 0;
    for (const auto& u : utts) steps = std::max(steps, u.size());
    ad::NodeId h = g_.constant(Tensor({rows, h_dim}, 0.0));
    ad::NodeId table = param("emb");
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<std::size_t> ids(rows, Vocabulary::kPad);
      Tensor mask({rows, h_dim}, 0.0);
      bool all_active = true;
      for (std::size_t r = 0; r < rows; ++r) {
        if (s < utts[r].size()) {
          ids[r] = utts[r][s];
          std::fill_n(mask.data.begin() + r * h_dim, h_dim, 1.0);
        } else {
          all_active = false;
        }
      }
      ad::NodeId next = gru("enc", g_.embedding(table, std::move(ids)), h, rows);
      h = all_active ? next : g_.add(h, g_.mul(g_.constant(std::move(mask)), g_.sub(next, h)));
    }
    return h;
  }

  ad::NodeId prior_logits_start(std::size_t rows) { return g_.matmul(ones(rows), param("prior.start")); }

  ad::NodeId prior_logits(ad::NodeId z_prev, std::size_t rows) {
    return linear("prior.out", g_.tanh(linear("prior.hidden", z_prev, rows)), rows);
  }

  ad::NodeId posterior_logits(ad::NodeId enc, ad::NodeId h_prev, std::size_t rows) {
    return linear("post", g_.concat({enc, h_prev}, 1), rows);
  }

  /// Teacher-forced decoder. Returns the summed per-utterance mean token
  /// negative log-likelihood (EOS included) over all rows.
  ad::NodeId reconstruction(ad::NodeId z, ad::NodeId ctx,
                            const std::vector<std::vector<std::size_t>>& utts) {
    const std::size_t rows = utts.size();
    ad::NodeId cond = g_.concat({z, ctx}, 1);
    ad::NodeId h = g_.tanh(linear("dec.init", cond, rows));
    ad::NodeId table = param("emb");
    std::size_t steps = 0;
    for (const auto& u : utts) steps = std::max(steps, u.size() + 1);
    std::vector<ad::NodeId> picked;
    std::vector<ad::Position> targets;
    std::vector<double> scale;
    std::size_t stacked = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<std::size_t> ids(rows, Vocabulary::kPad);
      std::vector<std::size_t> active;
      for (std::size_t r = 0; r < rows; ++r) {
        if (s == 0) {
          ids[r] = Vocabulary::kBos;
        } else if (s - 1 < utts[r].size()) {
          ids[r] = utts[r][s - 1];
        }
        if (s <= utts[r].size()) {
          active.push_back(r);
          const std::size_t target = s < utts[r].size() ? utts[r][s] : Vocabulary::kEos;
          targets.emplace_back(stacked + active.size() - 1, target);
          scale.push_back(1.0 / static_cast<double>(utts[r].size() + 1));
        }
      }
      ad::NodeId x = g_.concat({g_.embedding(table, std::move(ids)), z}, 1);
      h = gru("dec", x, h, rows);
      stacked += active.size();
      picked.push_back(active.size() == rows ? h : g_.embedding(h, std::move(active)));
    }
    ad::NodeId all = picked.size() == 1 ? picked[0] : g_.concat(picked, 0);
    ad::NodeId logp = g_.log_softmax(linear("dec.out", all, stacked));
    ad::NodeId ll = g_.gather(logp, std::move(targets));
    ad::NodeId weighted = g_.mul(ll, g_.constant(Tensor::vector(std::move(scale))));
    return g_.sub(g_.scalar(0.0), g_.reduce_sum(weighted));
  }

  /// Summed per-utterance weight-normalised BOW negative log-likelihood.
  ad::NodeId bow(ad::NodeId z, ad::NodeId ctx, const std::vector<std::vector<std::size_t>>& utts,
                 const std::vector<double>& weights) {
    const std::size_t rows = utts.size();
    ad::NodeId cond = g_.concat({z, ctx}, 1);
    ad::NodeId f = linear("bow.out", g_.tanh(linear("bow.hidden", cond, rows)), rows);
    ad::NodeId logp = g_.log_softmax(f);
    std::vector<ad::Position> pos;
    std::vector<double> scale;
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t id : utts[r]) total += weights.at(id);
      if (total <= 0.0) continue;
      for (std::size_t id : utts[r]) {
        if (weights[id] == 0.0) continue;
        pos.emplace_back(r, id);
        scale.push_back(weights[id] / total);
      }
    }
    if (pos.empty()) return g_.scalar(0.0);
    ad::NodeId ll = g_.gather(logp, std::move(pos));
    ad::NodeId weighted = g_.mul(ll, g_.constant(Tensor::vector(std::move(scale))));
    return g_.sub(g_.scalar(0.0), g_.reduce_sum(weighted));
  }

 private:
  ad::Graph& g_;
  const ModelConfig& cfg_;
  const ParameterStore& params_;
  std::map<std::string, ad::NodeId> cache_;
  std::map<std::size_t, ad::NodeId> ones_;
};

/// Turn-major layout of a batch: dialogs sorted by length (longest first) so
/// the dialogs still running at turn t form a prefix.
struct Layout {
  std::vector<std::size_t> order;        // sorted position -> batch dialog
  std::vector<std::size_t> active;       // per turn: number of running dialogs
  std::vector<std::size_t> offset;       // per turn: first turn-major row
  std::vector<std::size_t> row_of_utt;   // batch utterance index -> turn-major row
  std::vector<std::vector<std::size_t>> utts;  // turn-major token rows
};

Layout make_layout(const DialogBatch& batch) {
  Layout l;
  l.order.resize(batch.batch_size);
  std::iota(l.order.begin(), l.order.end(), 0);
  std::stable_sort(l.order.begin(), l.order.end(), [&](std::size_t a, std::size_t b) {
    return batch.dialog_lengths[a] > batch.dialog_lengths[b];
  });
  std::vector<std::size_t> first_utt(batch.batch_size, 0);
  for (std::size_t b = 1; b < batch.batch_size; ++b) {
    first_utt[b] = first_utt[b - 1] + batch.dialog_lengths[b - 1];
  }
  const std::size_t n = batch.utterance_count();
  l.row_of_utt.assign(n, 0);
  std::size_t row = 0;
  for (std::size_t t = 0; t < batch.max_turns; ++t) {
    std::size_t count = 0;
    while (count < l.order.size() && batch.dialog_lengths[l.order[count]] > t) ++count;
    l.active.push_back(count);
    l.offset.push_back(row);
    for (std::size_t j = 0; j < count; ++j, ++row) {
      const std::size_t b = l.order[j];
      l.utts.push_back(batch.utterance(b, t));
      l.row_of_utt[first_utt[b] + t] = row;
    }
  }
  return l;
}

struct Recurrence {
  ad::NodeId z = 0;        // [N, K] turn-major
  ad::NodeId context = 0;  // [N, D] dialog state before each turn
  ad::NodeId state = 0;    // [N, D] dialog state after each turn
  ad::NodeId logits = 0;   // [N, K] posterior logits
  ad::NodeId q = 0;
  ad::NodeId log_q = 0;
  ad::NodeId kl_sum = 0;
};

ad::NodeId stack(ad::Graph& g, const std::vector<ad::NodeId>& xs) {
  return xs.size() == 1 ? xs[0] : g.concat(xs, 0);
}

Recurrence run_recurrence(Net& net, const ModelConfig& cfg, const DialogBatch& batch,
                          const Layout& l, ad::NodeId enc, bool with_kl, Rng* gumbel_rng) {
  ad::Graph& g = net.g();
  const std::size_t k = cfg.num_states;
  std::vector<ad::NodeId> zs, ctxs, states, logits, qs, logqs, kls;
  ad::NodeId h = g.constant(Tensor({l.active.at(0), cfg.dialog_dim}, 0.0));
  ad::NodeId z_prev = 0;
  for (std::size_t t = 0; t < l.active.size(); ++t) {
    const std::size_t n = l.active[t];
    ad::NodeId enc_t = g.slice_rows(enc, l.offset[t], n);
    ad::NodeId h_prev = t == 0 ? h : g.slice_rows(h, 0, n);
    ad::NodeId post = net.posterior_logits(enc_t, h_prev, n);
    ad::NodeId log_q = g.log_softmax(post);
    ad::NodeId q = g.softmax(post);
    if (with_kl) {
      ad::NodeId prior = t == 0 ? net.prior_logits_start(n)
                                : net.prior_logits(g.slice_rows(z_prev, 0, n), n);
      ad::NodeId log_p = g.max_scalar(g.log_softmax(prior), kLogPriorFloor);
      kls.push_back(g.reduce_sum(g.mul(q, g.sub(log_q, log_p))));
    }
    ad::NodeId z = q;
    if (cfg.gumbel_tau > 0.0 && gumbel_rng != nullptr) {
      Tensor noise({n, k});
      for (double& v : noise.data) v = gumbel_rng->gumbel();
      z = g.softmax(g.div(g.add(log_q, g.constant(std::move(noise))), g.scalar(cfg.gumbel_tau)));
    }
    Tensor speaker({n, 1});
    for (std::size_t j = 0; j < n; ++j) {
      speaker[j] = static_cast<double>(batch.speakers[l.order[j] * batch.max_turns + t]);
    }
    ad::NodeId x = g.concat({enc_t, z, g.constant(std::move(speaker))}, 1);
    h = net.gru("dlg", x, h_prev, n);
    zs.push_back(z);
    ctxs.push_back(h_prev);
    states.push_back(h);
    logits.push_back(post);
    qs.push_back(q);
    logqs.push_back(log_q);
    z_prev = z;
  }
  Recurrence rec;
  rec.z = stack(g, zs);
  rec.context = stack(g, ctxs);
  rec.state = stack(g, states);
  rec.logits = stack(g, logits);
  rec.q = stack(g, qs);
  rec.log_q = stack(g, logqs);
  if (with_kl) rec.kl_sum = kls.size() == 1 ? kls[0] : g.reduce_sum(g.concat(kls, 0));
  return rec;
}

void add_parameters(ParameterStore& p, const ModelConfig& c, Rng& rng) {
  const std::size_t k = c.num_states;
  auto gru = [&](const std::string& name, std::size_t in, std::size_t hid) {
    for (const char* gate : {"z", "r", "n"}) {
      p.add_glorot(name + ".W" + gate, {in, hid}, rng);
      p.add_glorot(name + ".U" + gate, {hid, hid}, rng);
      p.add_zeros(name + ".b" + gate, {1, hid});
    }
  };
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    p.add_glorot(name + ".W", {in, out}, rng);
    p.add_zeros(name + ".b", {1, out});
  };
  Tensor emb({c.vocab_size, c.embed_dim});
  for (double& v : emb.data) v = 0.1 * rng.normal();
  p.add("emb", std::move(emb));
  gru("enc", c.embed_dim, c.encoder_dim);
  linear("post", c.encoder_dim + c.dialog_dim, k);
  p.add_zeros("prior.start", {1, k});
  linear("prior.hidden", k, c.dialog_dim);
  linear("prior.out", c.dialog_dim, k);
  gru("dlg", c.encoder_dim + k + 1, c.dialog_dim);
  linear("dec.init", k + c.dialog_dim, c.decoder_dim);
  gru("dec", c.embed_dim + k, c.decoder_dim);
  linear("dec.out", c.decoder_dim, c.vocab_size);
  linear("bow.hidden", k + c.dialog_dim, c.bow_dim);
  linear("bow.out", c.bow_dim, c.vocab_size);
}

Tensor as_row(const Tensor& v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                     " values, got " + std::to_string(v.size()));
  }
  return Tensor({1, expected}, v.data);
}

Tensor as_vector(const Tensor& t) { return Tensor({t.size()}, t.data); }

}  // namespace

DdVrnn::DdVrnn(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  add_parameters(params_, cfg_, init_rng);
}

BatchNodes DdVrnn::build_loss(ad::Graph& g, const DialogBatch& batch,
                              const std::vector<double>& token_weights,
                              const BatchConstraints* constraints, Rng* gumbel_rng) const {
  if (token_weights.size() != cfg_.vocab_size) {
    throw ShapeError("token weight vector has " + std::to_string(token_weights.size()) +
                     " entries, vocabulary has " + std::to_string(cfg_.vocab_size));
  }
  if (cfg_.gumbel_tau > 0.0 && gumbel_rng == nullptr) {
    throw ConfigError("gumbel_tau > 0 requires a sampling generator");
  }
  Net net(g, cfg_, params_);
  const Layout l = make_layout(batch);
  const std::size_t n = l.utts.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  ad::NodeId enc = net.encode(l.utts);
  Recurrence rec = run_recurrence(net, cfg_, batch, l, enc, true, gumbel_rng);

  BatchNodes out;
  out.kl = g.mul(rec.kl_sum, g.scalar(inv_n));
  out.reconstruction = g.mul(net.reconstruction(rec.z, rec.context, l.utts), g.scalar(inv_n));
  out.bow = g.mul(net.bow(rec.z, rec.context, l.utts, token_weights), g.scalar(inv_n));

  std::vector<ad::Position> labeled;
  for (std::size_t b = 0, u = 0; b < batch.batch_size; ++b) {
    for (std::size_t t = 0; t < batch.dialog_lengths[b]; ++t, ++u) {
      const int label = batch.labels[b * batch.max_turns + t];
      if (label < 0) continue;
      if (static_cast<std::size_t>(label) >= cfg_.num_states) {
        throw ConfigError("label " + std::to_string(label) + " outside the latent state range");
      }
      labeled.emplace_back(l.row_of_utt[u], static_cast<std::size_t>(label));
    }
  }
  out.ce = labeled.empty()
               ? g.scalar(0.0)
               : g.sub(g.scalar(0.0), g.reduce_mean(g.gather(rec.log_q, std::move(labeled))));

  out.posterior = g.embedding(rec.q, l.row_of_utt);
  if (constraints != nullptr && constraints->rules != nullptr && !constraints->rules->empty()) {
    const auto& rules = *constraints->rules;
    out.truths.reserve(rules.size());
    for (std::size_t i = 0; i < rules.size(); ++i) {
      out.truths.push_back(rule_truth(g, rules[i], i,
                                      constraints->template_weights.at(rules[i].template_index),
                                      out.posterior, constraints->logic));
    }
    out.constraint = constraint_loss(g, out.truths, constraints->logic);
  } else {
    out.constraint = g.scalar(0.0);
  }
  out.total = g.add(g.add(g.add(out.reconstruction, out.kl),
                          g.mul(g.scalar(cfg_.lambda_bow), out.bow)),
                    g.add(out.ce, out.constraint));
  return out;
}

LossBreakdown DdVrnn::read_breakdown(const ad::Graph& g, const BatchNodes& nodes) {
  LossBreakdown b;
  b.reconstruction = g.value(nodes.reconstruction).item();
  b.kl = g.value(nodes.kl).item();
  b.bow = g.value(nodes.bow).item();
  b.ce = g.value(nodes.ce).item();
  b.constraint = g.value(nodes.constraint).item();
  b.total = g.value(nodes.total).item();
  b.ground_rules = nodes.truths.size();
  if (!nodes.truths.empty()) {
    double s = 0.0;
    for (const RuleTruth& rt : nodes.truths) s += g.value(rt.truth).item();
    b.mean_truth = s / static_cast<double>(nodes.truths.size());
  }
  return b;
}

Inference DdVrnn::infer(const DialogBatch& batch) const {
  ad::Graph g;
  Net net(g, cfg_, params_);
  const Layout l = make_layout(batch);
  ad::NodeId enc = net.encode(l.utts);
  Recurrence rec = run_recurrence(net, cfg_, batch, l, enc, false, nullptr);
  ad::NodeId post = g.embedding(rec.q, l.row_of_utt);
  ad::NodeId feats = g.embedding(g.concat({rec.logits, rec.state}, 1), l.row_of_utt);
  g.forward(params_.bindings());
  Inference inf;
  inf.posterior = g.value(post);
  inf.features = g.value(feats);
  const std::size_t k = cfg_.num_states;
  const std::size_t n = inf.posterior.rows();
  inf.states.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = inf.posterior.data.data() + r * k;
    inf.states[r] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
  }
  return inf;
}

Tensor DdVrnn::encode_utterance(const std::vector<std::size_t>& tokens) const {
  if (tokens.empty() ||
      std::all_of(tokens.begin(), tokens.end(), [](std::size_t t) { return t == Vocabulary::kPad; })) {
    throw ConfigError("encode_utterance: all-padding utterance");
  }
  for (std::size_t t : tokens) {
    if (t >= cfg_.vocab_size) throw ConfigError("encode_utterance: token id out of range");
  }
  ad::Graph g;
  Net net(g, cfg_, params_);
  ad::NodeId h = net.encode({tokens});
  g.forward(params_.bindings());
  return as_vector(g.value(h));
}

Tensor DdVrnn::prior_step(const std::optional<Tensor>& z_prev) const {
  ad::Graph g;
  Net net(g, cfg_, params_);
  ad::NodeId logits =
      z_prev ? net.prior_logits(g.constant(as_row(*z_prev, cfg_.num_states, "prior_step")), 1)
             : net.prior_logits_start(1);
  ad::NodeId p = g.softmax(logits);
  g.forward(params_.bindings());
  return as_vector(g.value(p));
}

Tensor DdVrnn::posterior_step(const Tensor& utterance_vec, const Tensor& dialog_state) const {
  ad::Graph g;
  Net net(g, cfg_, params_);
  ad::NodeId enc = g.constant(as_row(utterance_vec, cfg_.encoder_dim, "posterior_step"));
  ad::NodeId h = g.constant(as_row(dialog_state, cfg_.dialog_dim, "posterior_step"));
  ad::NodeId q = g.softmax(net.posterior_logits(enc, h, 1));
  g.forward(params_.bindings());
  return as_vector(g.value(q));
}

double DdVrnn::reconstruction_nll(const Tensor& z, const Tensor& context,
                                  const std::vector<std::size_t>& targets) const {
  if (targets.empty()) throw ConfigError("reconstruction_nll: empty target");
  ad::Graph g;
  Net net(g, cfg_, params_);
  ad::NodeId zn = g.constant(as_row(z, cfg_.num_states, "reconstruction_nll"));
  ad::NodeId cn = g.constant(as_row(context, cfg_.dialog_dim, "reconstruction_nll"));
  ad::NodeId loss = net.reconstruction(zn, cn, {targets});
  g.forward(params_.bindings());
  return g.value(loss).item();
}

double DdVrnn::bow_nll(const Tensor& z, const Tensor& context,
                       const std::vector<std::size_t>& targets,
                       const std::vector<double>& weights) const {
  if (weights.size() != cfg_.vocab_size) throw ShapeError("bow_nll: weight vector size mismatch");
  ad::Graph g;
  Net net(g, cfg_, params_);
  ad::NodeId zn = g.constant(as_row(z, cfg_.num_states, "bow_nll"));
  ad::NodeId cn = g.constant(as_row(context, cfg_.dialog_dim, "bow_nll"));
  ad::NodeId loss = net.bow(zn, cn, {targets}, weights);
  g.forward(params_.bindings());
  return g.value(loss).item();
}

double step_kl(const std::vector<double>& q, const std::vector<double>& p) {
  if (q.size() != p.size()) throw ShapeError("step_kl: distributions differ in length");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    kl += q[i] * (std::log(q[i]) - std::log(std::max(p[i], 1e-10)));
  }
  return kl;
}

LossBreakdown batch_loss(const DdVrnn& model, const DialogBatch& batch,
                         const std::vector<double>& token_weights,
                         const BatchConstraints* constraints, Rng* gumbel_rng) {
  ad::Graph g;
  BatchNodes nodes = model.build_loss(g, batch, token_weights, constraints, gumbel_rng);
  g.forward(model.params().bindings());
  if (!nodes.truths.empty()) check_rule_truths(g, nodes.truths);
  LossBreakdown b = DdVrnn::read_breakdown(g, nodes);
  if (!b.finite()) throw NumericError("non-finite batch loss: " + b.to_string());
  return b;
}

}  // namespace dsi
