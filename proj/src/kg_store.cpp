#include "know3/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "know3/errors.hpp"
#include "know3/similarity.hpp"
#include "know3/text.hpp"

namespace know3 {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Calls fn(line_number, fields) for every non-comment, non-blank line.
template <typename Fn>
void for_each_record(std::string_view text, std::string_view what, size_t arity,
                     Fn&& fn) {
  size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto fields = split(line, '\t');
    bool ok = fields.size() == arity;
    for (auto& f : fields) {
      f = trim(f);
      if (f.empty()) ok = false;
    }
    if (!ok) {
      throw DataError(std::string(what) + " line " + std::to_string(line_no) +
                      ": expected " + std::to_string(arity) +
                      " non-empty tab-separated fields");
    }
    fn(line_no, fields);
  }
}

}  // namespace

const std::string& KnowledgeGraph::entity_label(EntityId e) const {
  return entity_labels_.at(e);
}

const std::string& KnowledgeGraph::relation_label(RelationId r) const {
  return relation_labels_.at(r);
}

const std::vector<std::string>& KnowledgeGraph::entity_aliases(EntityId e) const {
  return entity_aliases_.at(e);
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view surface) const {
  auto it = surfaces_.find(fold_case(trim(surface)));
  if (it == surfaces_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view label) const {
  auto it = relation_index_.find(fold_case(trim(label)));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId head) const {
  if (head >= num_entities()) {
    throw std::out_of_range("unknown entity id " + std::to_string(head));
  }
  return std::span<const Edge>(edges_).subspan(offsets_[head],
                                               offsets_[head + 1] - offsets_[head]);
}

std::vector<EntityId> KnowledgeGraph::tails(EntityId head, RelationId relation) const {
  std::vector<EntityId> out;
  for (const Edge& e : neighbors(head)) {
    if (e.relation == relation) out.push_back(e.tail);
  }
  return out;
}

size_t KnowledgeGraph::degree(EntityId e) const { return degree_.at(e); }

bool KnowledgeGraph::contains(const Triple& t) const {
  return std::binary_search(triples_.begin(), triples_.end(), t);
}

void KnowledgeGraph::dump_vocabulary(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p,
                  const std::vector<std::string>& labels) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    for (size_t i = 0; i < labels.size(); ++i) out << i << '\t' << labels[i] << '\n';
  };
  write(dir / "entities.tsv", entity_labels_);
  write(dir / "relations.tsv", relation_labels_);
}

EntityId KnowledgeGraph::Builder::add_entity(std::string_view label) {
  std::string key = fold_case(label);
  auto [it, inserted] =
      g_.entity_index_.emplace(std::move(key), static_cast<EntityId>(g_.entity_labels_.size()));
  if (inserted) {
    g_.entity_labels_.emplace_back(label);
    g_.entity_aliases_.emplace_back();
  }
  return it->second;
}

RelationId KnowledgeGraph::Builder::add_relation(std::string_view label) {
  std::string key = fold_case(label);
  auto [it, inserted] = g_.relation_index_.emplace(
      std::move(key), static_cast<RelationId>(g_.relation_labels_.size()));
  if (inserted) g_.relation_labels_.emplace_back(label);
  return it->second;
}

void KnowledgeGraph::Builder::add_triple(std::string_view head,
                                         std::string_view relation,
                                         std::string_view tail) {
  EntityId h = add_entity(head);
  RelationId r = add_relation(relation);
  EntityId t = add_entity(tail);
  g_.triples_.push_back({h, r, t});
}

void KnowledgeGraph::Builder::add_alias(std::string_view alias,
                                        std::string_view canonical) {
  auto it = g_.entity_index_.find(fold_case(canonical));
  if (it == g_.entity_index_.end()) {
    throw DataError("alias '" + std::string(alias) + "' references unknown label '" +
                    std::string(canonical) + "'");
  }
  aliases_.emplace_back(std::string(alias), it->second);
}

KnowledgeGraph KnowledgeGraph::Builder::build() && {
  KnowledgeGraph g = std::move(g_);
  auto& triples = g.triples_;
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

  const size_t n = g.entity_labels_.size();
  g.offsets_.assign(n + 1, 0);
  g.degree_.assign(n, 0);
  for (const Triple& t : triples) {
    ++g.offsets_[t.head + 1];
    ++g.degree_[t.head];
    if (t.tail != t.head) ++g.degree_[t.tail];
  }
  for (size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
  g.edges_.reserve(triples.size());
  // Triples are sorted by head first, so edges land in (relation, tail) order.
  for (const Triple& t : triples) g.edges_.push_back({t.relation, t.tail});

  for (const auto& [key, id] : g.entity_index_) g.surfaces_.emplace(key, id);

  // Alias collisions go to the better attested entity, then the lower id.
  // Aliases never shadow a canonical label.
  std::map<std::string, std::vector<std::pair<std::string, EntityId>>> by_alias;
  for (auto& [alias, id] : aliases_) by_alias[fold_case(alias)].emplace_back(alias, id);
  for (auto& [key, candidates] : by_alias) {
    if (g.entity_index_.count(key)) continue;
    EntityId best = candidates.front().second;
    for (const auto& [alias, id] : candidates) {
      if (g.degree_[id] > g.degree_[best] ||
          (g.degree_[id] == g.degree_[best] && id < best)) {
        best = id;
      }
    }
    g.surfaces_.emplace(key, best);
    for (const auto& [alias, id] : candidates) {
      if (id == best) {
        g.entity_aliases_[best].push_back(alias);
        break;
      }
    }
  }
  for (const auto& [key, id] : g.surfaces_) {
    g.max_surface_length_ = std::max(g.max_surface_length_, key.size());
  }
  return g;
}

KnowledgeGraph parse_kg(std::string_view triples_tsv, std::string_view aliases_tsv) {
  KnowledgeGraph::Builder builder;
  for_each_record(triples_tsv, "triples", 3, [&](size_t, const auto& f) {
    builder.add_triple(f[0], f[1], f[2]);
  });
  for_each_record(aliases_tsv, "aliases", 2, [&](size_t line_no, const auto& f) {
    try {
      builder.add_alias(f[0], f[1]);
    } catch (const DataError& e) {
      throw DataError(std::string("aliases line ") + std::to_string(line_no) + ": " +
                      e.what());
    }
  });
  return std::move(builder).build();
}

KnowledgeGraph load_kg(const std::filesystem::path& triples_path,
                       const std::optional<std::filesystem::path>& aliases_path) {
  std::string triples = read_file(triples_path);
  std::string aliases = aliases_path ? read_file(*aliases_path) : std::string();
  return parse_kg(triples, aliases);
}

std::vector<EntityId> AliasLinker::link(std::string_view text) const {
  const std::string folded = fold_case(text);
  const size_t n = folded.size();
  auto word = [&](size_t i) { return is_word_char(static_cast<unsigned char>(folded[i])); };

  std::vector<size_t> starts, ends;
  for (size_t i = 0; i < n; ++i) {
    if (word(i) && (i == 0 || !word(i - 1))) starts.push_back(i);
    if (word(i) && (i + 1 == n || !word(i + 1))) ends.push_back(i + 1);
  }

  struct Match {
    size_t begin, end;
    EntityId entity;
  };
  std::vector<Match> matches;
  const auto& surfaces = kg_.surface_forms();
  const size_t max_len = kg_.max_surface_length();
  for (size_t b : starts) {
    for (auto it = std::lower_bound(ends.begin(), ends.end(), b + 1); it != ends.end();
         ++it) {
      if (*it - b > max_len) break;
      auto hit = surfaces.find(folded.substr(b, *it - b));
      if (hit != surfaces.end()) matches.push_back({b, *it, hit->second});
    }
  }

  std::stable_sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.end - a.begin != b.end - b.begin) return a.end - a.begin > b.end - b.begin;
    return a.begin < b.begin;
  });
  std::vector<Match> chosen;
  for (const Match& m : matches) {
    bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const Match& c) {
      return m.begin < c.end && c.begin < m.end;
    });
    if (!overlaps) chosen.push_back(m);
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const Match& a, const Match& b) { return a.begin < b.begin; });

  std::vector<EntityId> out;
  for (const Match& m : chosen) {
    if (std::find(out.begin(), out.end(), m.entity) == out.end()) out.push_back(m.entity);
  }
  return out;
}

std::vector<EntityId> link_entities(std::string_view text, const KnowledgeGraph& kg) {
  return AliasLinker(kg).link(text);
}

std::optional<Triple> map_triple(const KnowledgeGraph& kg,
                                 const SimilarityProvider* sim,
                                 std::string_view head, std::string_view relation,
                                 std::string_view tail, double threshold) {
  auto h = kg.find_entity(head);
  auto t = kg.find_entity(tail);
  if (!h || !t) return std::nullopt;
  auto r = kg.find_relation(relation);
  if (!r && sim != nullptr) {
    double best = threshold;
    for (RelationId cand = 0; cand < kg.num_relations(); ++cand) {
      double s = sim->sim(relation, kg.relation_label(cand));
      if (s >= best && (!r || s > best)) {
        best = s;
        r = cand;
      }
    }
  }
  if (!r) return std::nullopt;
  return Triple{*h, *r, *t};
}

}  // namespace know3
