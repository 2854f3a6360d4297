#include <filesystem>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "stargraph/vocab.hpp"

using namespace stargraph;
using namespace sgtest;

TEST_CASE("select_anchors picks the top degrees with id tiebreak") {
    const auto g = star_graph();
    CHECK(select_anchors(g, 2).anchors == std::vector<EntityId>{0, 3});
    CHECK(select_anchors(g, 1).anchors == std::vector<EntityId>{0});
    CHECK_THROWS_AS(select_anchors(g, 0), std::runtime_error);
    CHECK_THROWS_AS(select_anchors(g, 6), std::runtime_error);
}

TEST_CASE("select_anchors matches the full-sort oracle") {
    const auto g = random_graph(100, 400, 5, 31);
    const auto got = select_anchors(g, 10).anchors;
    std::vector<EntityId> all(100);
    for (EntityId u = 0; u < 100; ++u) all[static_cast<std::size_t>(u)] = u;
    std::sort(all.begin(), all.end(), [&](EntityId a, EntityId b) {
        if (g.degree(a) != g.degree(b)) return g.degree(a) > g.degree(b);
        return a < b;
    });
    all.resize(10);
    CHECK(got == all);
}

TEST_CASE("sample_anchors walks the star graph as hand-traced") {
    const auto g = star_graph();
    const auto anchors = select_anchors(g, 2);  // [0, 3] -> ordinals 0, 1
    // From 4: hop-1 finds anchor 3, hop-2 finds anchor 0.
    CHECK(sample_anchors(g, anchors, 4, 2) == std::vector<std::int32_t>{1, 0});
    // An anchor counts itself at hop 0.
    CHECK(sample_anchors(g, anchors, 0, 1) == std::vector<std::int32_t>{0});
    CHECK_THROWS_AS(sample_anchors(g, anchors, 99, 2), std::runtime_error);
}

TEST_CASE("unreachable anchors leave pad slots") {
    // Star edges plus an isolated entity 6.
    auto g = make_graph(7, 1, {{1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 3}, {5, 0, 3}}, {}, {});
    const auto anchors = select_anchors(g, 2);
    CHECK(sample_anchors(g, anchors, 6, 2).empty());
    const auto vocab = build_vocabulary(g, anchors, 2, 1);
    CHECK(vocab.anchors_of(6)[0] == -1);
    CHECK(vocab.anchors_of(6)[1] == -1);
}

TEST_CASE("hop cap pads out anchors beyond reach") {
    const auto g = star_graph();
    const auto anchors = select_anchors(g, 2);
    // From 4 with a 1-hop cap only anchor 3 is reachable.
    CHECK(sample_anchors(g, anchors, 4, 2, /*hop_cap=*/1) == std::vector<std::int32_t>{1});
}

TEST_CASE("sample_neighbors follows (degree desc, id asc) and excludes self") {
    const auto g = star_graph();
    CHECK(sample_neighbors(g, 3, 2) == std::vector<EntityId>{0, 4});
    CHECK(sample_neighbors(g, 0, 10) == std::vector<EntityId>{3, 1, 2});
    const auto iso = make_graph(3, 1, {{0, 0, 1}}, {}, {});
    CHECK(sample_neighbors(iso, 2, 5).empty());
}

TEST_CASE("sample_neighbors matches a sort oracle on random graphs") {
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        const auto g = random_graph(60, 300, 4, seed);
        for (EntityId u = 0; u < g.num_entities; ++u) {
            std::set<EntityId> nb;
            for (const auto& t : g.train) {
                if (t.head == u && t.tail != u) nb.insert(t.tail);
                if (t.tail == u && t.head != u) nb.insert(t.head);
            }
            std::vector<EntityId> expect(nb.begin(), nb.end());
            std::sort(expect.begin(), expect.end(), [&](EntityId a, EntityId b) {
                if (g.degree(a) != g.degree(b)) return g.degree(a) > g.degree(b);
                return a < b;
            });
            if (expect.size() > 4) expect.resize(4);
            CHECK(sample_neighbors(g, u, 4) == expect);
        }
    }
}

TEST_CASE("star vocabulary reproduces the hand-traced tokens for entity 4") {
    const auto g = star_graph();
    const auto anchors = select_anchors(g, 2);
    const auto vocab = build_vocabulary(g, anchors, 2, 1);
    // Entity 4: anchors [3, 0] (as ids), neighbor [3], center 4.
    CHECK(vocab.anchor_ids[static_cast<std::size_t>(vocab.anchors_of(4)[0])] == 3);
    CHECK(vocab.anchor_ids[static_cast<std::size_t>(vocab.anchors_of(4)[1])] == 0);
    CHECK(vocab.neighbors_of(4)[0] == 3);
    CHECK(vocab.dump_entry(4, true) == "4: 3,0 | 3 | 4");
    CHECK(vocab.dump_entry(4, false) == "4: 3,0 | 3");
}

TEST_CASE("entities sharing anchors and neighbors still differ via center") {
    const auto g = star_graph();
    const auto anchors = select_anchors(g, 2);
    const auto vocab = build_vocabulary(g, anchors, 2, 1);
    // 4 and 5 have identical anchor and neighbor tokens; centers differ.
    CHECK(vocab.anchors_of(4)[0] == vocab.anchors_of(5)[0]);
    CHECK(vocab.anchors_of(4)[1] == vocab.anchors_of(5)[1]);
    CHECK(vocab.neighbors_of(4)[0] == vocab.neighbors_of(5)[0]);
}

TEST_CASE("vocabulary equals per-node BFS and the APSP oracle on random graphs") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto nodes = 20 + static_cast<std::int64_t>(seed * 9);  // up to 200
        const auto g = random_graph(nodes, nodes * 3, 3, seed * 101);
        const auto anchors = select_anchors(g, std::max<std::int64_t>(2, nodes / 10));
        const std::int32_t k = 4, cap = 10;
        const auto vocab = build_vocabulary(g, anchors, k, 2, cap);
        const auto dist = apsp_oracle(g);
        for (EntityId u = 0; u < g.num_entities; ++u) {
            const auto bfs = sample_anchors(g, anchors, u, k, cap);
            const auto oracle = anchor_oracle(g, anchors, dist, u, k, cap);
            CHECK(bfs == oracle);
            std::vector<std::int32_t> from_vocab;
            for (std::int32_t s = 0; s < k; ++s)
                if (vocab.anchors_of(u)[s] >= 0) from_vocab.push_back(vocab.anchors_of(u)[s]);
            CHECK(from_vocab == oracle);
            // Hop monotonicity: BFS returns anchors in non-decreasing hop order.
            for (std::size_t s = 1; s < bfs.size(); ++s) {
                const auto prev = anchors.anchors[static_cast<std::size_t>(bfs[s - 1])];
                const auto curr = anchors.anchors[static_cast<std::size_t>(bfs[s])];
                CHECK(dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(prev)] <=
                      dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(curr)]);
            }
        }
    }
}

TEST_CASE("vocabulary invariants: ordinal range and distinct non-pad tokens") {
    const auto g = random_graph(80, 320, 4, 77);
    const auto anchors = select_anchors(g, 12);
    const auto vocab = build_vocabulary(g, anchors, 5, 3);
    for (EntityId u = 0; u < g.num_entities; ++u) {
        std::set<std::int32_t> seen_a;
        for (std::int32_t s = 0; s < vocab.k; ++s) {
            const auto a = vocab.anchors_of(u)[s];
            if (a < 0) continue;
            CHECK(a < anchors.size());
            CHECK(seen_a.insert(a).second);
        }
        std::set<EntityId> seen_n;
        for (std::int32_t s = 0; s < vocab.m; ++s) {
            const auto n = vocab.neighbors_of(u)[s];
            if (n < 0) continue;
            CHECK(n != u);
            CHECK(seen_n.insert(n).second);
        }
    }
}

TEST_CASE("vocabulary build is deterministic and threads do not change it") {
    const auto g = random_graph(120, 500, 4, 3);
    const auto anchors = select_anchors(g, 15);
    const auto v1 = build_vocabulary(g, anchors, 6, 3, 10, 1);
    const auto v2 = build_vocabulary(g, anchors, 6, 3, 10, 4);
    CHECK(v1.anchor_tokens == v2.anchor_tokens);
    CHECK(v1.neighbor_tokens == v2.neighbor_tokens);

    const auto p1 = (std::filesystem::temp_directory_path() / "sg_v1.sgv").string();
    const auto p2 = (std::filesystem::temp_directory_path() / "sg_v2.sgv").string();
    v1.save(p1);
    v2.save(p2);
    CHECK(checksum_file(p1) == checksum_file(p2));
}

TEST_CASE("vocabulary file round-trips and validates its graph") {
    const auto g = star_graph();
    const auto anchors = select_anchors(g, 2);
    auto vocab = build_vocabulary(g, anchors, 2, 1);
    vocab.config_echo = "k_anchors=2\n";
    const auto path = (std::filesystem::temp_directory_path() / "sg_rt.sgv").string();
    vocab.save(path);
    const auto loaded = Vocabulary::load(path);
    CHECK(loaded.k == vocab.k);
    CHECK(loaded.m == vocab.m);
    CHECK(loaded.anchor_ids == vocab.anchor_ids);
    CHECK(loaded.anchor_tokens == vocab.anchor_tokens);
    CHECK(loaded.neighbor_tokens == vocab.neighbor_tokens);
    CHECK(loaded.graph_checksum == vocab.graph_checksum);
    CHECK(loaded.config_echo == vocab.config_echo);
    CHECK_NOTHROW(loaded.verify_graph(g));

    const auto other = random_graph(10, 20, 2, 5);
    CHECK_THROWS_WITH_AS(loaded.verify_graph(other), doctest::Contains("checksum mismatch"), std::runtime_error);
}

TEST_CASE("truncated vocabulary file reports the parse offset") {
    const auto g = star_graph();
    const auto vocab = build_vocabulary(g, select_anchors(g, 2), 2, 1);
    const auto path = (std::filesystem::temp_directory_path() / "sg_tr.sgv").string();
    vocab.save(path);
    std::filesystem::resize_file(path, 17);
    CHECK_THROWS_WITH_AS(Vocabulary::load(path), doctest::Contains("parse error at offset"), std::runtime_error);
}

TEST_CASE("anchors come back in non-decreasing hop order even with a tight cap") {
    const auto g = random_graph(150, 450, 3, 41);
    const auto anchors = select_anchors(g, 20);
    const auto dist = apsp_oracle(g);
    for (const std::int32_t cap : {1, 2, 3}) {
        for (EntityId u = 0; u < g.num_entities; u += 7) {
            const auto got = sample_anchors(g, anchors, u, 6, cap);
            CHECK(got == anchor_oracle(g, anchors, dist, u, 6, cap));
        }
    }
}
