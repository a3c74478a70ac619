#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "texgraph/errors.hpp"

namespace texgraph {

using Index = std::uint32_t;

/// Unordered entity-type pair, canonicalized so that m <= n.
struct BlockKey {
  Index m = 0;
  Index n = 0;

  static BlockKey canonical(Index a, Index b) { return a <= b ? BlockKey{a, b} : BlockKey{b, a}; }
  bool diagonal() const noexcept { return m == n; }
  auto operator<=>(const BlockKey&) const = default;
};

/// Triplets as read from disk. Strings are interned: the triplet list holds
/// ids into `entity_names` and `relation_names`, in file order.
struct ParsedTriplets {
  struct Row {
    Index head;
    Index relation;
    Index tail;
  };
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::vector<Row> rows;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return rows.size(); }
  std::string_view head(std::size_t i) const { return entity_names[rows[i].head]; }
  std::string_view relation(std::size_t i) const { return relation_names[rows[i].relation]; }
  std::string_view tail(std::size_t i) const { return entity_names[rows[i].tail]; }
};

struct ParseOptions {
  std::string entity_sep = "::";
  /// Skip malformed lines with a warning instead of failing.
  bool skip_malformed = false;
};

namespace detail {

class Interner {
 public:
  explicit Interner(std::vector<std::string>& names) : names_(names) {}
  Index intern(std::string_view s) {
    auto it = ids_.find(std::string(s));
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<Index>(names_.size());
    names_.emplace_back(s);
    ids_.emplace(names_.back(), id);
    return id;
  }

 private:
  std::vector<std::string>& names_;
  std::unordered_map<std::string, Index> ids_;
};

}  // namespace detail

/// Reads tab-separated (head, relation, tail) lines. Entities must carry a
/// type prefix terminated by `opts.entity_sep`.
inline ParsedTriplets parse_triplets(std::istream& in, const ParseOptions& opts = {}) {
  ParsedTriplets out;
  detail::Interner entities(out.entity_names);
  detail::Interner relations(out.relation_names);
  std::string line;
  std::size_t line_no = 0;
  std::size_t skipped = 0;

  auto malformed = [&](const std::string& why) {
    std::ostringstream msg;
    msg << "line " << line_no << ": " << why << ": '" << line << "'";
    if (!opts.skip_malformed) throw InputError(msg.str());
    out.warnings.push_back(msg.str());
    ++skipped;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view sv(line);
    const auto t1 = sv.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : sv.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || sv.find('\t', t2 + 1) != std::string_view::npos) {
      malformed("expected exactly 3 tab-separated fields");
      continue;
    }
    const auto h = sv.substr(0, t1);
    const auto r = sv.substr(t1 + 1, t2 - t1 - 1);
    const auto t = sv.substr(t2 + 1);
    if (h.empty() || r.empty() || t.empty()) {
      malformed("empty field");
      continue;
    }
    const auto hs = h.find(opts.entity_sep);
    const auto ts = t.find(opts.entity_sep);
    if (hs == std::string_view::npos || hs == 0 || ts == std::string_view::npos || ts == 0) {
      malformed("entity without 'Type" + opts.entity_sep + "Id' prefix");
      continue;
    }
    out.rows.push_back({entities.intern(h), relations.intern(r), entities.intern(t)});
  }
  if (in.bad()) throw InputError("read error after line " + std::to_string(line_no));
  if (out.rows.empty() && skipped == 0) out.warnings.push_back("no triplets in input");
  return out;
}

inline ParsedTriplets parse_triplets(const std::string& path, const ParseOptions& opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open triplet file '" + path + "'");
  return parse_triplets(in, opts);
}

/// (type, local index) coordinates of one entity.
struct EntityRef {
  Index type = 0;
  Index local = 0;
  auto operator<=>(const EntityRef&) const = default;
};

struct RelationInfo {
  std::string name;
  Index head_type = 0;
  Index tail_type = 0;
  BlockKey block;
  Index slab = 0;
};

/// Maps raw entity and relation names to typed coordinates and defines the
/// block structure of the coupled model.
class TypedVocabulary {
 public:
  TypedVocabulary() = default;

  /// Assembles a vocabulary from explicit tables (used when loading from
  /// disk). Relation slab indices must be dense per block.
  TypedVocabulary(std::vector<std::string> types, std::vector<std::vector<std::string>> entities,
                  std::vector<RelationInfo> relations)
      : types_(std::move(types)), entities_(std::move(entities)), relations_(std::move(relations)) {
    if (entities_.size() != types_.size())
      throw InputError("vocabulary: entity table count differs from type count");
    rebuild_indexes();
  }

  std::size_t type_count() const noexcept { return types_.size(); }
  std::size_t entity_count() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }

  const std::vector<std::string>& types() const noexcept { return types_; }
  const std::string& type_name(Index t) const { return types_.at(t); }
  std::size_t type_size(Index t) const { return entities_.at(t).size(); }
  std::vector<std::size_t> type_sizes() const {
    std::vector<std::size_t> s;
    for (const auto& e : entities_) s.push_back(e.size());
    return s;
  }
  const std::vector<std::string>& entities(Index t) const { return entities_.at(t); }
  const std::string& entity_name(EntityRef e) const { return entities_.at(e.type).at(e.local); }

  /// Global index = offset(type) + local; offsets are prefix sums of type sizes.
  std::size_t offset(Index t) const { return offsets_.at(t); }
  std::size_t global_index(EntityRef e) const { return offsets_.at(e.type) + e.local; }

  std::optional<Index> find_type(std::string_view name) const {
    for (Index t = 0; t < types_.size(); ++t)
      if (types_[t] == name) return t;
    return std::nullopt;
  }
  std::optional<EntityRef> find_entity(std::string_view raw) const {
    auto it = entity_ids_.find(std::string(raw));
    if (it == entity_ids_.end()) return std::nullopt;
    return it->second;
  }
  EntityRef entity(std::string_view raw) const {
    if (auto e = find_entity(raw)) return *e;
    throw InputError("unknown entity '" + std::string(raw) + "'");
  }

  const std::vector<RelationInfo>& relations() const noexcept { return relations_; }
  const RelationInfo& relation_info(Index r) const { return relations_.at(r); }

  std::optional<Index> find_relation(std::string_view name) const {
    auto it = relation_ids_.find(std::string(name));
    if (it == relation_ids_.end()) return std::nullopt;
    return it->second;
  }
  Index relation(std::string_view name) const {
    if (auto r = find_relation(name)) return *r;
    throw InputError("unknown relation '" + std::string(name) + "'");
  }

  /// Relation index for a raw name observed with a given (head, tail) type
  /// signature; resolves names split by coercion.
  std::optional<Index> find_relation(std::string_view name, Index head_type,
                                     Index tail_type) const {
    if (auto r = find_relation(name)) {
      const auto& info = relations_[*r];
      if (info.head_type == head_type && info.tail_type == tail_type) return r;
    }
    std::ostringstream coerced;
    coerced << name << '@' << head_type << ':' << tail_type;
    return find_relation(coerced.str());
  }

  /// Blocks in lexicographic key order, with their slab count K_{m,n}.
  const std::map<BlockKey, std::vector<Index>>& block_relations() const noexcept {
    return block_relations_;
  }
  std::size_t slab_count(BlockKey key) const {
    auto it = block_relations_.find(key);
    return it == block_relations_.end() ? 0 : it->second.size();
  }

  bool operator==(const TypedVocabulary& o) const {
    if (types_ != o.types_ || entities_ != o.entities_ || relations_.size() != o.relations_.size())
      return false;
    for (std::size_t r = 0; r < relations_.size(); ++r) {
      const auto& a = relations_[r];
      const auto& b = o.relations_[r];
      if (a.name != b.name || a.head_type != b.head_type || a.tail_type != b.tail_type ||
          a.block != b.block || a.slab != b.slab)
        return false;
    }
    return true;
  }

 private:
  void rebuild_indexes() {
    offsets_.assign(1, 0);
    entity_ids_.clear();
    for (Index t = 0; t < entities_.size(); ++t) {
      offsets_.push_back(offsets_.back() + entities_[t].size());
      for (Index i = 0; i < entities_[t].size(); ++i) {
        if (!entity_ids_.emplace(entities_[t][i], EntityRef{t, i}).second)
          throw InputError("vocabulary: duplicate entity '" + entities_[t][i] + "'");
      }
    }
    relation_ids_.clear();
    block_relations_.clear();
    for (Index r = 0; r < relations_.size(); ++r) {
      const auto& info = relations_[r];
      if (info.head_type >= types_.size() || info.tail_type >= types_.size())
        throw InputError("vocabulary: relation '" + info.name + "' references unknown type");
      if (info.block != BlockKey::canonical(info.head_type, info.tail_type))
        throw InputError("vocabulary: relation '" + info.name + "' has inconsistent block");
      if (!relation_ids_.emplace(info.name, r).second)
        throw InputError("vocabulary: duplicate relation '" + info.name + "'");
      auto& slabs = block_relations_[info.block];
      if (slabs.size() <= info.slab) slabs.resize(info.slab + 1, Index(-1));
      if (slabs[info.slab] != Index(-1))
        throw InputError("vocabulary: two relations share a slab in block of '" + info.name + "'");
      slabs[info.slab] = r;
    }
    for (const auto& [key, slabs] : block_relations_)
      for (Index s : slabs)
        if (s == Index(-1)) throw InputError("vocabulary: slab indices are not dense");
  }

  std::vector<std::string> types_;
  std::vector<std::vector<std::string>> entities_;
  std::vector<RelationInfo> relations_;
  std::vector<std::size_t> offsets_;
  std::unordered_map<std::string, EntityRef> entity_ids_;
  std::unordered_map<std::string, Index> relation_ids_;
  std::map<BlockKey, std::vector<Index>> block_relations_;
};

struct VocabularyOptions {
  std::string entity_sep = "::";
  /// Fixed type order; when empty, types are numbered by first appearance.
  std::vector<std::string> type_roster;
  /// Split relations seen with several type signatures into `name@h:t`.
  bool coerce = false;
};

namespace detail {

inline std::string_view entity_type_prefix(std::string_view raw, const std::string& sep) {
  const auto p = raw.find(sep);
  if (p == std::string_view::npos || p == 0)
    throw InputError("entity '" + std::string(raw) + "' has no type prefix");
  return raw.substr(0, p);
}

}  // namespace detail

/// Discovers entity types, per-type entity orderings (first appearance) and
/// the relation → (block, slab) map.
inline TypedVocabulary build_vocabulary(const ParsedTriplets& triplets,
                                        const VocabularyOptions& opts = {}) {
  if (triplets.size() == 0) throw InputError("cannot build a vocabulary from zero triplets");

  std::vector<std::string> types = opts.type_roster;
  std::unordered_map<std::string, Index> type_ids;
  for (Index t = 0; t < types.size(); ++t)
    if (!type_ids.emplace(types[t], t).second)
      throw InputError("type roster lists '" + types[t] + "' twice");

  // Entity type and local index, keyed by interned entity id.
  constexpr Index kUnset = Index(-1);
  std::vector<EntityRef> entity_of(triplets.entity_names.size(), EntityRef{kUnset, kUnset});
  std::vector<std::vector<std::string>> entities(types.size());

  auto type_of_name = [&](std::string_view raw) -> Index {
    const auto prefix = std::string(detail::entity_type_prefix(raw, opts.entity_sep));
    auto it = type_ids.find(prefix);
    if (it != type_ids.end()) return it->second;
    if (!opts.type_roster.empty())
      throw InputError("entity type '" + prefix + "' is not in the type roster");
    const auto id = static_cast<Index>(types.size());
    types.push_back(prefix);
    entities.emplace_back();
    type_ids.emplace(prefix, id);
    return id;
  };
  auto visit_entity = [&](Index id) {
    auto& ref = entity_of[id];
    if (ref.type != kUnset) return ref;
    ref.type = type_of_name(triplets.entity_names[id]);
    ref.local = static_cast<Index>(entities[ref.type].size());
    entities[ref.type].push_back(triplets.entity_names[id]);
    return ref;
  };

  // Signatures per relation, in order of first appearance.
  using Signature = std::pair<Index, Index>;
  std::vector<std::vector<Signature>> signatures(triplets.relation_names.size());
  std::vector<std::pair<Index, Signature>> relation_sig_order;  // first appearance of (rel, sig)
  for (const auto& row : triplets.rows) {
    const auto h = visit_entity(row.head);
    const auto t = visit_entity(row.tail);
    auto& sigs = signatures[row.relation];
    const Signature sig{h.type, t.type};
    bool seen = false;
    for (const auto& s : sigs) seen = seen || s == sig;
    if (!seen) {
      sigs.push_back(sig);
      relation_sig_order.emplace_back(row.relation, sig);
    }
  }

  std::vector<RelationInfo> relations;
  std::map<BlockKey, Index> next_slab;
  auto add_relation = [&](std::string name, Signature sig) {
    RelationInfo info;
    info.name = std::move(name);
    info.head_type = sig.first;
    info.tail_type = sig.second;
    info.block = BlockKey::canonical(sig.first, sig.second);
    info.slab = next_slab[info.block]++;
    relations.push_back(std::move(info));
  };
  for (const auto& [rel, sig] : relation_sig_order) {
    const auto& name = triplets.relation_names[rel];
    const auto& sigs = signatures[rel];
    if (sigs.size() == 1) {
      add_relation(name, sig);
      continue;
    }
    if (!opts.coerce) {
      std::ostringstream msg;
      msg << "relation '" << name << "' observed with " << sigs.size()
          << " type signatures (" << types[sigs[0].first] << "->" << types[sigs[0].second]
          << ", " << types[sigs[1].first] << "->" << types[sigs[1].second] << ")";
      throw InputError(msg.str());
    }
    std::ostringstream coerced;
    coerced << name << '@' << sig.first << ':' << sig.second;
    add_relation(coerced.str(), sig);
  }

  return TypedVocabulary(std::move(types), std::move(entities), std::move(relations));
}

/// One input triplet in typed local coordinates; the entity types follow
/// from the relation's signature.
struct Edge {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Resolves parsed triplets against a vocabulary, dropping exact duplicates
/// while keeping first-appearance order.
inline std::vector<Edge> resolve_edges(const ParsedTriplets& triplets, const TypedVocabulary& vocab) {
  std::vector<EntityRef> entity_of(triplets.entity_names.size());
  for (Index id = 0; id < triplets.entity_names.size(); ++id)
    entity_of[id] = vocab.entity(triplets.entity_names[id]);

  std::vector<Edge> edges;
  edges.reserve(triplets.size());
  for (const auto& row : triplets.rows) {
    const auto h = entity_of[row.head];
    const auto t = entity_of[row.tail];
    const auto r = vocab.find_relation(triplets.relation_names[row.relation], h.type, t.type);
    if (!r)
      throw InputError("relation '" + triplets.relation_names[row.relation] +
                       "' not in vocabulary for its type signature");
    edges.push_back({h.local, *r, t.local});
  }
  // Stable dedup: sort indices, mark repeats, compact.
  std::vector<std::size_t> order(edges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return edges[a] < edges[b]; });
  std::vector<char> keep(edges.size(), 1);
  for (std::size_t i = 1; i < order.size(); ++i)
    if (edges[order[i]] == edges[order[i - 1]]) keep[order[i]] = 0;
  std::vector<Edge> unique;
  unique.reserve(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (keep[i]) unique.push_back(edges[i]);
  return unique;
}

}  // namespace texgraph
