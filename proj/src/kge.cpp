#include "know3/kge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "know3/errors.hpp"

namespace know3 {

ComplExModel::ComplExModel(size_t num_entities, size_t num_relations, size_t dim,
                           std::uint64_t seed)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      dim_(dim),
      seed_(seed),
      ent_re_(num_entities * dim),
      ent_im_(num_entities * dim),
      rel_re_(num_relations * dim),
      rel_im_(num_relations * dim) {}

ComplExModel ComplExModel::random(size_t num_entities, size_t num_relations, size_t dim,
                                  std::uint64_t seed) {
  ComplExModel m(num_entities, num_relations, dim, seed);
  std::mt19937_64 rng(seed);
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> init(-bound, bound);
  for (auto* table : {&m.ent_re_, &m.ent_im_, &m.rel_re_, &m.rel_im_}) {
    for (double& x : *table) x = init(rng);
  }
  m.round_to_float();
  return m;
}

double ComplExModel::score(EntityId head, RelationId relation, EntityId tail) const {
  auto hr = entity_re(head), hi = entity_im(head);
  auto rr = relation_re(relation), ri = relation_im(relation);
  auto tr = entity_re(tail), ti = entity_im(tail);
  double s = 0.0;
  for (size_t k = 0; k < dim_; ++k) {
    s += hr[k] * rr[k] * tr[k] + hi[k] * rr[k] * ti[k] + hr[k] * ri[k] * ti[k] -
         hi[k] * ri[k] * tr[k];
  }
  return s;
}

bool ComplExModel::all_finite() const {
  for (const auto* table : {&ent_re_, &ent_im_, &rel_re_, &rel_im_}) {
    for (double x : *table) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

void ComplExModel::round_to_float() {
  for (auto* table : {&ent_re_, &ent_im_, &rel_re_, &rel_im_}) {
    for (double& x : *table) x = static_cast<double>(static_cast<float>(x));
  }
}

void ComplExModel::set_zero() {
  for (auto* table : {&ent_re_, &ent_im_, &rel_re_, &rel_im_}) {
    std::fill(table->begin(), table->end(), 0.0);
  }
}

void TrainConfig::validate() const {
  if (dim == 0 || epochs == 0 || negatives_per_positive == 0 || batch_size == 0) {
    throw ConfigError("train config: dim, epochs, negatives and batch size must be positive");
  }
  if (!(learning_rate > 0.0) || !(l2_weight > 0.0)) {
    throw ConfigError("train config: learning rate and l2 weight must be positive");
  }
}

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double squared_norm(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * a[k] + b[k] * b[k];
  return s;
}

}  // namespace

double batch_loss(const ComplExModel& model, std::span<const TrainingSample> batch,
                  double l2_weight, ComplExModel* grad) {
  if (batch.empty()) return 0.0;
  const size_t d = model.dim();
  double loss = 0.0;
  for (const TrainingSample& sample : batch) {
    const Triple& t = sample.triple;
    auto hr = model.entity_re(t.head), hi = model.entity_im(t.head);
    auto rr = model.relation_re(t.relation), ri = model.relation_im(t.relation);
    auto tr = model.entity_re(t.tail), ti = model.entity_im(t.tail);

    const double s = model.score(t);
    const double reg = squared_norm(hr, hi) + squared_norm(rr, ri) + squared_norm(tr, ti);
    loss += softplus(-sample.label * s) + l2_weight * reg;
    if (grad == nullptr) continue;

    // d softplus(-y s) / ds = -y * sigmoid(-y s)
    const double g = -sample.label * sigmoid(-sample.label * s);
    const double g2 = 2.0 * l2_weight;
    auto ghr = grad->entity_re(t.head), ghi = grad->entity_im(t.head);
    auto grr = grad->relation_re(t.relation), gri = grad->relation_im(t.relation);
    auto gtr = grad->entity_re(t.tail), gti = grad->entity_im(t.tail);
    for (size_t k = 0; k < d; ++k) {
      const double dhr = rr[k] * tr[k] + ri[k] * ti[k];
      const double dhi = rr[k] * ti[k] - ri[k] * tr[k];
      const double drr = hr[k] * tr[k] + hi[k] * ti[k];
      const double dri = hr[k] * ti[k] - hi[k] * tr[k];
      const double dtr = hr[k] * rr[k] - hi[k] * ri[k];
      const double dti = hi[k] * rr[k] + hr[k] * ri[k];
      ghr[k] += g * dhr + g2 * hr[k];
      ghi[k] += g * dhi + g2 * hi[k];
      grr[k] += g * drr + g2 * rr[k];
      gri[k] += g * dri + g2 * ri[k];
      gtr[k] += g * dtr + g2 * tr[k];
      gti[k] += g * dti + g2 * ti[k];
    }
  }
  return loss;
}

TrainResult train(std::span<const Triple> triples, size_t num_entities,
                  size_t num_relations, const TrainConfig& cfg) {
  cfg.validate();
  if (triples.empty()) throw ConfigError("cannot train on an empty graph");

  TrainResult result{ComplExModel::random(num_entities, num_relations, cfg.dim, cfg.seed),
                     {}};
  ComplExModel& model = result.model;
  ComplExModel grad(num_entities, num_relations, cfg.dim);
  // Per-parameter sum of squared gradients (AdaGrad step scaling).
  ComplExModel accum(num_entities, num_relations, cfg.dim);

  // Separate stream from the initializer so init and sampling stay decoupled.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<EntityId> pick_entity(
      0, static_cast<EntityId>(num_entities - 1));

  std::vector<Triple> order(triples.begin(), triples.end());
  std::vector<TrainingSample> batch;
  std::vector<EntityId> touched_entities;
  std::vector<RelationId> touched_relations;

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    size_t epoch_samples = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (size_t i = start; i < stop; ++i) {
        batch.push_back({order[i], 1.0});
        for (size_t n = 0; n < cfg.negatives_per_positive; ++n) {
          Triple neg = order[i];
          if (rng() & 1ULL) {
            neg.head = pick_entity(rng);
          } else {
            neg.tail = pick_entity(rng);
          }
          batch.push_back({neg, -1.0});
        }
      }

      touched_entities.clear();
      touched_relations.clear();
      for (const auto& s : batch) {
        touched_entities.push_back(s.triple.head);
        touched_entities.push_back(s.triple.tail);
        touched_relations.push_back(s.triple.relation);
      }
      std::sort(touched_entities.begin(), touched_entities.end());
      touched_entities.erase(std::unique(touched_entities.begin(), touched_entities.end()),
                             touched_entities.end());
      std::sort(touched_relations.begin(), touched_relations.end());
      touched_relations.erase(
          std::unique(touched_relations.begin(), touched_relations.end()),
          touched_relations.end());

      const double loss = batch_loss(model, batch, cfg.l2_weight, &grad);
      epoch_loss += loss;
      epoch_samples += batch.size();

      auto step = [&](std::span<double> param, std::span<double> g, std::span<double> acc) {
        for (size_t k = 0; k < param.size(); ++k) {
          acc[k] += g[k] * g[k];
          param[k] -= cfg.learning_rate * g[k] / (std::sqrt(acc[k]) + 1e-10);
          g[k] = 0.0;
        }
      };
      for (EntityId e : touched_entities) {
        step(model.entity_re(e), grad.entity_re(e), accum.entity_re(e));
        step(model.entity_im(e), grad.entity_im(e), accum.entity_im(e));
      }
      for (RelationId r : touched_relations) {
        step(model.relation_re(r), grad.relation_re(r), accum.relation_re(r));
        step(model.relation_im(r), grad.relation_im(r), accum.relation_im(r));
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_samples));
  }

  model.round_to_float();
  return result;
}

TrainResult train(const KnowledgeGraph& kg, const TrainConfig& cfg) {
  return train(kg.triples(), kg.num_entities(), kg.num_relations(), cfg);
}

double filtered_mrr(const ComplExModel& model, std::span<const Triple> test,
                    const std::set<Triple>& known) {
  if (test.empty()) return 0.0;
  double total = 0.0;
  for (const Triple& t : test) {
    const double truth = model.score(t);
    size_t rank = 1;
    for (EntityId cand = 0; cand < model.num_entities(); ++cand) {
      if (cand == t.tail) continue;
      Triple alt{t.head, t.relation, cand};
      if (known.count(alt)) continue;
      // NaN scores must not flatter the true tail.
      if (!(model.score(alt) < truth)) ++rank;
    }
    total += 1.0 / static_cast<double>(rank);
  }
  return total / static_cast<double>(test.size());
}

EntityId predict_tail(const ComplExModel& model, EntityId head, RelationId relation,
                      std::span<const EntityId> candidates) {
  if (candidates.empty()) throw std::invalid_argument("predict_tail: no candidates");
  EntityId best = candidates.front();
  double best_score = model.score(head, relation, best);
  for (EntityId cand : candidates.subspan(1)) {
    const double s = model.score(head, relation, cand);
    if (s > best_score || (s == best_score && cand < best)) {
      best = cand;
      best_score = s;
    }
  }
  return best;
}

EntityId predict_tail(const ComplExModel& model, EntityId head, RelationId relation) {
  std::vector<EntityId> all(model.num_entities());
  std::iota(all.begin(), all.end(), EntityId{0});
  return predict_tail(model, head, relation, all);
}

std::optional<RelativeScore> relative_triple_score(const ComplExModel& model,
                                                   const KnowledgeGraph& kg,
                                                   const Triple& tri) {
  auto refs = kg.neighbors(tri.head);
  if (refs.empty()) return std::nullopt;
  refs = refs.first(std::min(refs.size(), kMaxReferenceTriples));

  double sum = 0.0;
  for (const Edge& e : refs) sum += model.score(tri.head, e.relation, e.tail);
  RelativeScore out;
  out.kge_score = model.score(tri);
  out.reference_count = refs.size();
  out.reference_mean = sum / static_cast<double>(refs.size());
  out.relative = std::abs(out.kge_score - out.reference_mean);
  return out;
}

Reliability answer_reliability(const ComplExModel& model, const KnowledgeGraph& kg,
                               std::span<const std::optional<Triple>> triples) {
  Reliability out;
  std::vector<double> terms;
  for (const auto& t : triples) {
    std::optional<RelativeScore> rs;
    if (t) rs = relative_triple_score(model, kg, *t);
    if (rs) {
      ++out.verified;
      terms.push_back(rs->relative);
    } else {
      ++out.unverifiable;
    }
    out.per_triple.push_back(rs);
  }
  std::sort(terms.begin(), terms.end());
  for (double x : terms) out.score += x;
  return out;
}

namespace {

constexpr char kMagic[4] = {'K', '3', 'C', 'X'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::istream& in) {
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    int c = in.get();
    if (c == EOF) throw DataError("checkpoint truncated");
    v |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& path, const char* suffix) {
  return std::filesystem::path(path.string() + suffix);
}

std::vector<std::string> read_vocab(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed vocabulary " + p.string());
    labels.push_back(line.substr(tab + 1));
  }
  return labels;
}

}  // namespace

void save_checkpoint(const ComplExModel& model, const std::filesystem::path& path,
                     const KnowledgeGraph* kg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_entities()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_relations()));
  put_le<std::uint64_t>(out, model.seed());
  for (auto table : {model.entity_re_table(), model.entity_im_table(),
                     model.relation_re_table(), model.relation_im_table()}) {
    for (double x : table) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  if (!out) throw ConfigError("write failed for " + path.string());

  if (kg != nullptr) {
    auto write_vocab = [](const std::filesystem::path& p, size_t n, auto label) {
      std::ofstream v(p, std::ios::binary);
      if (!v) throw ConfigError("cannot write " + p.string());
      for (size_t i = 0; i < n; ++i) v << i << '\t' << label(i) << '\n';
    };
    write_vocab(sidecar(path, ".entities.tsv"), kg->num_entities(),
                [&](size_t i) { return kg->entity_label(static_cast<EntityId>(i)); });
    write_vocab(sidecar(path, ".relations.tsv"), kg->num_relations(),
                [&](size_t i) { return kg->relation_label(static_cast<RelationId>(i)); });
  }
}

ComplExModel load_checkpoint(const std::filesystem::path& path, const KnowledgeGraph* kg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not a ComplEx checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(in);
  const auto ne = get_le<std::uint32_t>(in);
  const auto nr = get_le<std::uint32_t>(in);
  const auto seed = get_le<std::uint64_t>(in);
  ComplExModel model(ne, nr, dim, seed);
  for (auto table : {model.entity_re_table(), model.entity_im_table(),
                     model.relation_re_table(), model.relation_im_table()}) {
    for (double& x : table) x = std::bit_cast<float>(get_le<std::uint32_t>(in));
  }
  if (in.peek() != EOF) throw DataError(path.string() + ": trailing bytes");
  if (!model.all_finite()) throw DataError(path.string() + ": non-finite embedding");

  if (kg != nullptr) {
    if (kg->num_entities() != ne || kg->num_relations() != nr) {
      throw DataError(path.string() + ": checkpoint shape does not match the graph");
    }
    auto check = [&](const char* suffix, size_t n, auto label) {
      auto labels = read_vocab(sidecar(path, suffix));
      if (labels.empty()) return;
      if (labels.size() != n) throw DataError(path.string() + ": vocabulary size mismatch");
      for (size_t i = 0; i < n; ++i) {
        if (labels[i] != label(i)) {
          throw DataError(path.string() + ": vocabulary mismatch at id " +
                          std::to_string(i) + " ('" + labels[i] + "')");
        }
      }
    };
    check(".entities.tsv", ne,
          [&](size_t i) { return kg->entity_label(static_cast<EntityId>(i)); });
    check(".relations.tsv", nr,
          [&](size_t i) { return kg->relation_label(static_cast<RelationId>(i)); });
  }
  return model;
}

}  // namespace know3
