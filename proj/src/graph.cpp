#include "stargraph/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <string_view>
#include <unordered_map>

#include "stargraph/util.hpp"

namespace stargraph {

namespace {

constexpr char kGraphMagic[5] = {'S', 'G', 'K', 'G', '1'};

struct LabelDict {
    std::unordered_map<std::string, std::int64_t> index;
    std::vector<std::string> labels;

    std::int64_t intern(std::string_view s) {
        auto it = index.find(std::string(s));
        if (it != index.end()) return it->second;
        const auto id = static_cast<std::int64_t>(labels.size());
        labels.emplace_back(s);
        index.emplace(labels.back(), id);
        return id;
    }
};

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::int64_t parse_id(std::string_view s, const std::string& path, std::int64_t lineno) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0)
        fail(path + ":" + std::to_string(lineno) + ": malformed id field '" + std::string(s) + "'");
    return v;
}

struct ParseState {
    LabelDict entities;
    LabelDict relations;
    std::int64_t max_entity = -1;
    std::int64_t max_relation = -1;
};

std::vector<Triple> parse_split(const std::string& path, const IngestOptions& opt, ParseState& st) {
    std::ifstream in(path);
    if (!in) fail("cannot open file: " + path);
    std::vector<Triple> out;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;  // blank line
        if (fields.size() != 3)
            fail(path + ":" + std::to_string(lineno) + ": malformed line, expected 3 fields, got " +
                 std::to_string(fields.size()));
        std::int64_t h, r, t;
        if (opt.format == TripleFormat::Ids) {
            h = parse_id(fields[0], path, lineno);
            r = parse_id(fields[1], path, lineno);
            t = parse_id(fields[2], path, lineno);
            if (opt.num_entities >= 0 && (h >= opt.num_entities || t >= opt.num_entities))
                fail(path + ":" + std::to_string(lineno) + ": entity id out of declared range [0, " +
                     std::to_string(opt.num_entities) + ")");
            if (opt.num_relations >= 0 && r >= opt.num_relations)
                fail(path + ":" + std::to_string(lineno) + ": relation id out of declared range [0, " +
                     std::to_string(opt.num_relations) + ")");
            st.max_entity = std::max({st.max_entity, h, t});
            st.max_relation = std::max(st.max_relation, r);
        } else {
            h = st.entities.intern(fields[0]);
            r = st.relations.intern(fields[1]);
            t = st.entities.intern(fields[2]);
        }
        out.push_back(Triple{static_cast<EntityId>(h), static_cast<RelationId>(r), static_cast<EntityId>(t)});
    }
    return out;
}

void dedup_split(std::vector<Triple>& triples) {
    // Stable in input order: keep the first occurrence of each triple.
    std::unordered_map<std::uint64_t, bool> seen;
    seen.reserve(triples.size() * 2);
    std::vector<Triple> kept;
    kept.reserve(triples.size());
    for (const auto& t : triples) {
        Fnv1a h;
        h.update_value(t.head);
        h.update_value(t.rel);
        h.update_value(t.tail);
        if (!seen.emplace(h.digest(), true).second) continue;
        kept.push_back(t);
    }
    triples = std::move(kept);
}

}  // namespace

std::int64_t Graph::degree(EntityId u) const {
    check_entity(u);
    return degrees[static_cast<std::size_t>(u)];
}

void Graph::check_entity(EntityId u) const {
    if (u < 0 || static_cast<std::int64_t>(u) >= num_entities)
        fail("entity id " + std::to_string(u) + " out of range [0, " + std::to_string(num_entities) + ")");
}

void Graph::finalize() {
    const auto v = static_cast<std::size_t>(num_entities);
    for (const auto* split : {&train, &valid, &test})
        for (const auto& t : *split) {
            if (t.head < 0 || t.head >= num_entities || t.tail < 0 || t.tail >= num_entities)
                fail("triple entity id out of range");
            if (t.rel < 0 || t.rel >= num_relations) fail("triple relation id out of range");
        }

    // Degrees first (self-loops count twice), then CSR slot counts (self-loops
    // store a single entry).
    degrees.assign(v, 0);
    std::vector<std::int64_t> slots(v, 0);
    for (const auto& t : train) {
        degrees[static_cast<std::size_t>(t.head)] += 1;
        degrees[static_cast<std::size_t>(t.tail)] += 1;
        slots[static_cast<std::size_t>(t.head)] += 1;
        if (t.head != t.tail) slots[static_cast<std::size_t>(t.tail)] += 1;
    }

    adj_offsets.assign(v + 1, 0);
    for (std::size_t u = 0; u < v; ++u) adj_offsets[u + 1] = adj_offsets[u] + slots[u];
    const auto total = static_cast<std::size_t>(adj_offsets[v]);
    adj_entity.assign(total, 0);
    adj_rel.assign(total, 0);
    adj_dir.assign(total, 0);

    std::vector<std::int64_t> cursor(adj_offsets.begin(), adj_offsets.end() - 1);
    auto put = [&](EntityId at, EntityId nb, RelationId r, std::uint8_t dir) {
        const auto pos = static_cast<std::size_t>(cursor[static_cast<std::size_t>(at)]++);
        adj_entity[pos] = nb;
        adj_rel[pos] = r;
        adj_dir[pos] = dir;
    };
    for (const auto& t : train) {
        put(t.head, t.tail, t.rel, 0);
        if (t.head != t.tail) put(t.tail, t.head, t.rel, 1);
    }

    // Sort each neighbor list by (degree desc, id asc, rel asc, dir asc) so
    // sampling order and the serialized bytes are both deterministic.
    for (std::size_t u = 0; u < v; ++u) {
        const auto lo = static_cast<std::size_t>(adj_offsets[u]);
        const auto hi = static_cast<std::size_t>(adj_offsets[u + 1]);
        std::vector<AdjEntry> tmp;
        tmp.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) tmp.push_back({adj_entity[i], adj_rel[i], adj_dir[i]});
        std::sort(tmp.begin(), tmp.end(), [&](const AdjEntry& a, const AdjEntry& b) {
            const auto da = degrees[static_cast<std::size_t>(a.entity)];
            const auto db = degrees[static_cast<std::size_t>(b.entity)];
            if (da != db) return da > db;
            if (a.entity != b.entity) return a.entity < b.entity;
            if (a.rel != b.rel) return a.rel < b.rel;
            return a.dir < b.dir;
        });
        for (std::size_t i = lo; i < hi; ++i) {
            adj_entity[i] = tmp[i - lo].entity;
            adj_rel[i] = tmp[i - lo].rel;
            adj_dir[i] = tmp[i - lo].dir;
        }
    }

    Fnv1a h;
    h.update_value(num_entities);
    h.update_value(num_relations);
    for (const auto* split : {&train, &valid, &test}) {
        h.update_value(static_cast<std::int64_t>(split->size()));
        for (const auto& t : *split) {
            h.update_value(t.head);
            h.update_value(t.rel);
            h.update_value(t.tail);
        }
    }
    for (const auto& s : entity_labels) h.update(s.data(), s.size());
    for (const auto& s : relation_labels) h.update(s.data(), s.size());
    checksum = h.digest();
}

Graph ingest(const std::string& train_path, const std::string& valid_path, const std::string& test_path,
             const IngestOptions& opt) {
    ParseState st;
    Graph g;
    g.train = parse_split(train_path, opt, st);
    if (!valid_path.empty()) g.valid = parse_split(valid_path, opt, st);
    if (!test_path.empty()) g.test = parse_split(test_path, opt, st);
    if (g.train.empty()) fail(train_path + ": no triples");

    if (opt.dedup) {
        dedup_split(g.train);
        dedup_split(g.valid);
        dedup_split(g.test);
    }

    if (opt.format == TripleFormat::Ids) {
        g.num_entities = opt.num_entities >= 0 ? opt.num_entities : st.max_entity + 1;
        g.num_relations = opt.num_relations >= 0 ? opt.num_relations : st.max_relation + 1;
    } else {
        g.num_entities = static_cast<std::int64_t>(st.entities.labels.size());
        g.num_relations = static_cast<std::int64_t>(st.relations.labels.size());
        g.entity_labels = std::move(st.entities.labels);
        g.relation_labels = std::move(st.relations.labels);
    }

    Fnv1a src;
    src.update_value(checksum_file(train_path));
    if (!valid_path.empty()) src.update_value(checksum_file(valid_path));
    if (!test_path.empty()) src.update_value(checksum_file(test_path));
    g.source_checksum = src.digest();

    g.finalize();
    log_info("ingest: %lld entities, %lld relations, train/valid/test = %zu/%zu/%zu",
             static_cast<long long>(g.num_entities), static_cast<long long>(g.num_relations), g.train.size(),
             g.valid.size(), g.test.size());
    return g;
}

Graph make_graph(std::int64_t num_entities, std::int64_t num_relations, std::vector<Triple> train,
                 std::vector<Triple> valid, std::vector<Triple> test) {
    Graph g;
    g.num_entities = num_entities;
    g.num_relations = num_relations;
    g.train = std::move(train);
    g.valid = std::move(valid);
    g.test = std::move(test);
    if (g.train.empty()) fail("no triples");
    g.finalize();
    return g;
}

void Graph::save(const std::string& path) const {
    BinWriter w(path);
    w.bytes(kGraphMagic, sizeof(kGraphMagic));
    w.u64(static_cast<std::uint64_t>(num_entities));
    w.u64(static_cast<std::uint64_t>(num_relations));
    w.u64(train.size());
    w.u64(valid.size());
    w.u64(test.size());
    for (const auto v : adj_offsets) w.i64(v);
    for (const auto v : adj_entity) w.i32(v);
    for (const auto v : adj_rel) w.i32(v);
    for (const auto v : adj_dir) w.u8(v);
    for (const auto v : degrees) w.i64(v);
    for (const auto* split : {&train, &valid, &test})
        for (const auto& t : *split) {
            w.i32(t.head);
            w.i32(t.rel);
            w.i32(t.tail);
        }
    w.u8(entity_labels.empty() && relation_labels.empty() ? 0 : 1);
    if (!entity_labels.empty() || !relation_labels.empty()) {
        w.u64(entity_labels.size());
        for (const auto& s : entity_labels) w.str(s);
        w.u64(relation_labels.size());
        for (const auto& s : relation_labels) w.str(s);
    }
    w.u64(checksum);
    w.u64(source_checksum);
    w.str(config_echo);
    w.close();
}

Graph Graph::load(const std::string& path) {
    BinReader r(path);
    char magic[5];
    r.bytes(magic, 5);
    if (std::memcmp(magic, kGraphMagic, 5) != 0) fail(path + ": not a graph cache file (bad magic)");
    Graph g;
    g.num_entities = static_cast<std::int64_t>(r.u64());
    g.num_relations = static_cast<std::int64_t>(r.u64());
    const auto n_train = r.u64();
    const auto n_valid = r.u64();
    const auto n_test = r.u64();
    const auto v = static_cast<std::size_t>(g.num_entities);
    g.adj_offsets.resize(v + 1);
    for (auto& x : g.adj_offsets) x = r.i64();
    const auto total = static_cast<std::size_t>(g.adj_offsets[v]);
    g.adj_entity.resize(total);
    for (auto& x : g.adj_entity) x = r.i32();
    g.adj_rel.resize(total);
    for (auto& x : g.adj_rel) x = r.i32();
    g.adj_dir.resize(total);
    for (auto& x : g.adj_dir) x = r.u8();
    g.degrees.resize(v);
    for (auto& x : g.degrees) x = r.i64();
    auto read_split = [&](std::uint64_t n) {
        std::vector<Triple> out(n);
        for (auto& t : out) {
            t.head = r.i32();
            t.rel = r.i32();
            t.tail = r.i32();
        }
        return out;
    };
    g.train = read_split(n_train);
    g.valid = read_split(n_valid);
    g.test = read_split(n_test);
    if (r.u8()) {
        g.entity_labels.resize(r.u64());
        for (auto& s : g.entity_labels) s = r.str();
        g.relation_labels.resize(r.u64());
        for (auto& s : g.relation_labels) s = r.str();
    }
    g.checksum = r.u64();
    g.source_checksum = r.u64();
    g.config_echo = r.str();

    // Verify content integrity: recompute the checksum from the loaded splits.
    Fnv1a h;
    h.update_value(g.num_entities);
    h.update_value(g.num_relations);
    for (const auto* split : {&g.train, &g.valid, &g.test}) {
        h.update_value(static_cast<std::int64_t>(split->size()));
        for (const auto& t : *split) {
            h.update_value(t.head);
            h.update_value(t.rel);
            h.update_value(t.tail);
        }
    }
    for (const auto& s : g.entity_labels) h.update(s.data(), s.size());
    for (const auto& s : g.relation_labels) h.update(s.data(), s.size());
    if (h.digest() != g.checksum) fail(path + ": checksum mismatch, file is corrupt");
    return g;
}

}  // namespace stargraph
