#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "stargraph/graph.hpp"

using namespace stargraph;
using namespace sgtest;

namespace {

std::string write_temp(const char* name, const std::string& content) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("ingest parses a 3-line id file") {
    const auto p = write_temp("sg_ids.tsv", "0 0 1\n1 0 2\n2 1 0\n");
    IngestOptions opt;
    const auto g = ingest(p, "", "", opt);
    CHECK(g.num_entities == 3);
    CHECK(g.num_relations == 2);
    CHECK(g.train.size() == 3);
    CHECK(g.train[0] == Triple{0, 0, 1});
    CHECK(g.train[2] == Triple{2, 1, 0});
}

TEST_CASE("ingest rejects an empty file") {
    const auto p = write_temp("sg_empty.tsv", "");
    CHECK_THROWS_WITH_AS(ingest(p, "", "", {}), doctest::Contains("no triples"), std::runtime_error);
}

TEST_CASE("ingest reports malformed lines with their number") {
    const auto p = write_temp("sg_bad.tsv", "0 0 1\n1 0\n");
    CHECK_THROWS_WITH_AS(ingest(p, "", "", {}), doctest::Contains(":2:"), std::runtime_error);
}

TEST_CASE("ingest rejects ids beyond a declared range") {
    const auto p = write_temp("sg_range.tsv", "0 0 7\n");
    IngestOptions opt;
    opt.num_entities = 4;
    CHECK_THROWS_WITH_AS(ingest(p, "", "", opt), doctest::Contains("out of declared range"), std::runtime_error);
}

TEST_CASE("label mode assigns dense first-seen ids") {
    const auto p = write_temp("sg_labels.tsv", "paris capital_of france\nberlin capital_of germany\n");
    IngestOptions opt;
    opt.format = TripleFormat::Labels;
    const auto g = ingest(p, "", "", opt);
    CHECK(g.num_entities == 4);
    CHECK(g.num_relations == 1);
    CHECK(g.entity_labels[0] == "paris");
    CHECK(g.entity_labels[1] == "france");
    CHECK(g.train[1] == Triple{2, 0, 3});
}

TEST_CASE("star graph degrees") {
    const auto g = star_graph();
    CHECK(g.degree(0) == 3);
    CHECK(g.degree(3) == 3);
    for (EntityId u : {1, 2, 4, 5}) CHECK(g.degree(u) == 1);
    CHECK_THROWS_AS(g.degree(6), std::runtime_error);
    CHECK_THROWS_AS(g.degree(-1), std::runtime_error);
}

TEST_CASE("self-loop counts twice toward degree, once in adjacency") {
    const auto g = make_graph(1, 1, {{0, 0, 0}}, {}, {});
    CHECK(g.degree(0) == 2);
    CHECK(g.adj_end(0) - g.adj_begin(0) == 1);
    CHECK(g.adj_entity[0] == 0);
}

TEST_CASE("isolated entity appearing only in valid/test has degree 0") {
    const auto g = make_graph(3, 1, {{0, 0, 1}}, {{0, 0, 2}}, {});
    CHECK(g.degree(2) == 0);
}

TEST_CASE("degrees match the brute-force incidence oracle on a random graph") {
    const auto g = random_graph(50, 200, 4, 17);
    const auto oracle = degree_oracle(g);
    for (EntityId u = 0; u < 50; ++u) CHECK(g.degree(u) == oracle[static_cast<std::size_t>(u)]);
}

TEST_CASE("adjacency is symmetric and degree sum is twice the edge count") {
    const auto g = random_graph(40, 150, 3, 23);
    std::int64_t total = 0;
    for (EntityId u = 0; u < g.num_entities; ++u) {
        total += g.degree(u);
        for (auto i = g.adj_begin(u); i < g.adj_end(u); ++i) {
            const auto v = g.adj_entity[static_cast<std::size_t>(i)];
            bool back = false;
            for (auto j = g.adj_begin(v); j < g.adj_end(v) && !back; ++j)
                back = g.adj_entity[static_cast<std::size_t>(j)] == u;
            CHECK(back);
        }
    }
    CHECK(total == 2 * static_cast<std::int64_t>(g.train.size()));
}

TEST_CASE("neighbor lists are sorted by (degree desc, id asc)") {
    const auto g = random_graph(30, 120, 2, 5);
    for (EntityId u = 0; u < g.num_entities; ++u) {
        for (auto i = g.adj_begin(u); i + 1 < g.adj_end(u); ++i) {
            const auto a = g.adj_entity[static_cast<std::size_t>(i)];
            const auto b = g.adj_entity[static_cast<std::size_t>(i + 1)];
            const auto da = g.degree(a), db = g.degree(b);
            const bool ok = da > db || (da == db && a <= b);
            CHECK(ok);
        }
    }
}

TEST_CASE("duplicate triples are kept by default and dropped with dedup") {
    const auto p = write_temp("sg_dup.tsv", "0 0 1\n0 0 1\n1 0 2\n");
    {
        const auto g = ingest(p, "", "", {});
        CHECK(g.train.size() == 3);
        CHECK(g.degree(1) == 3);
    }
    {
        IngestOptions opt;
        opt.dedup = true;
        const auto g = ingest(p, "", "", opt);
        CHECK(g.train.size() == 2);
        CHECK(g.degree(1) == 2);
    }
}

TEST_CASE("graph cache round-trips losslessly") {
    auto g = random_graph(25, 80, 3, 99);
    g.valid = {g.train[0], g.train[5]};
    g.test = {g.train[1]};
    g.finalize();
    g.config_echo = "seed=1\n";
    const auto path = (std::filesystem::temp_directory_path() / "sg_cache.sgkg").string();
    g.save(path);
    const auto h = Graph::load(path);
    CHECK(h.num_entities == g.num_entities);
    CHECK(h.num_relations == g.num_relations);
    CHECK(h.train == g.train);
    CHECK(h.valid == g.valid);
    CHECK(h.test == g.test);
    CHECK(h.adj_offsets == g.adj_offsets);
    CHECK(h.adj_entity == g.adj_entity);
    CHECK(h.adj_rel == g.adj_rel);
    CHECK(h.degrees == g.degrees);
    CHECK(h.checksum == g.checksum);
    CHECK(h.config_echo == g.config_echo);

    // Saving the reloaded graph must reproduce identical bytes.
    const auto path2 = (std::filesystem::temp_directory_path() / "sg_cache2.sgkg").string();
    h.save(path2);
    CHECK(checksum_file(path) == checksum_file(path2));
}

TEST_CASE("truncated cache file reports the offset") {
    const auto g = star_graph();
    const auto path = (std::filesystem::temp_directory_path() / "sg_trunc.sgkg").string();
    g.save(path);
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full / 2);
    CHECK_THROWS_WITH_AS(Graph::load(path), doctest::Contains("parse error at offset"), std::runtime_error);
}
