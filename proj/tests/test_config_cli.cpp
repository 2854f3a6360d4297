#include <filesystem>
#include <fstream>

#include "cli.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "stargraph/checkpoint.hpp"
#include "stargraph/config.hpp"
#include "stargraph/evaluator.hpp"
#include "stargraph/toy.hpp"

using namespace stargraph;
using namespace sgtest;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"stargraph"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string tmp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("config: set/echo round-trips and rejects unknown keys and bad values") {
    RunConfig cfg;
    cfg.set("d_a", "64");
    cfg.set("encoder", "mlp");
    cfg.set("use_center", "false");
    cfg.set("lr", "0.001");
    CHECK(cfg.d_a == 64);
    CHECK(cfg.encoder == "mlp");
    CHECK_FALSE(cfg.use_center);
    CHECK(cfg.lr == doctest::Approx(0.001));

    CHECK_THROWS_WITH_AS(cfg.set("nope", "1"), doctest::Contains("unknown key"), std::runtime_error);
    CHECK_THROWS_AS(cfg.set("d_a", "abc"), std::runtime_error);
    CHECK_THROWS_AS(cfg.set("use_center", "maybe"), std::runtime_error);

    const auto echo = cfg.echo();
    const auto back = RunConfig::from_echo(echo);
    CHECK(back.echo() == echo);
    CHECK(back.d_a == 64);
    CHECK(back.encoder == "mlp");
}

TEST_CASE("config file: comments, whitespace, unknown-key rejection with line numbers") {
    const auto path = tmp_path("sg_cfg.txt");
    {
        std::ofstream out(path);
        out << "# comment line\n\n  d_a = 32 \nnorm=l2\nmax_steps=100 # trailing comment\n";
    }
    RunConfig cfg;
    cfg.apply_file(path);
    CHECK(cfg.d_a == 32);
    CHECK(cfg.norm == "l2");
    CHECK(cfg.max_steps == 100);

    {
        std::ofstream out(path);
        out << "d_a=32\nmystery=1\n";
    }
    RunConfig cfg2;
    CHECK_THROWS_WITH_AS(cfg2.apply_file(path), doctest::Contains(":2:"), std::runtime_error);
}

TEST_CASE("config maps onto encoder/score/train configs with validation") {
    RunConfig cfg;
    cfg.encoder = "bogus";
    CHECK_THROWS_AS(cfg.encoder_config(), std::runtime_error);
    cfg.encoder = "attention";
    cfg.score = "bogus";
    CHECK_THROWS_AS(cfg.score_config(), std::runtime_error);
    cfg.score = "triplere_v2";
    cfg.norm = "l2";
    const auto sc = cfg.score_config();
    CHECK(sc.variant == ScoreVariant::TripleReV2);
    CHECK(sc.norm == Norm::L2);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.train_config(), std::runtime_error);
}

TEST_CASE("cli exit codes: usage errors are 2, runtime failures are 1") {
    CHECK(run_cli({"no-such-command"}) == 2);
    CHECK(run_cli({"train"}) == 2);                                    // missing required --graph
    CHECK(run_cli({"train", "--graph", "g"}) == 2);                    // missing --vocab/--out
    CHECK(run_cli({"build-vocab", "--graph", "/nonexistent.sgkg", "--out", tmp_path("v.sgv")}) == 1);
    CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("cli pipeline: ingest, build-vocab, dump-subgraph on the star fixture") {
    // Star graph as a TSV file.
    const auto tsv = tmp_path("sg_star.tsv");
    {
        std::ofstream out(tsv);
        out << "1 0 0\n2 0 0\n3 0 0\n4 0 3\n5 0 3\n";
    }
    const auto cache = tmp_path("sg_star.sgkg");
    const auto vocab_path = tmp_path("sg_star.sgv");
    CHECK(run_cli({"ingest", "--train", tsv, "--out", cache, "--force"}) == 0);
    CHECK(run_cli({"build-vocab", "--graph", cache, "--num-anchors", "2", "--k", "2", "--m", "1", "--out",
                   vocab_path}) == 0);
    CHECK(run_cli({"dump-subgraph", "--graph", cache, "--vocab", vocab_path, "--entity", "4"}) == 0);

    const auto vocab = Vocabulary::load(vocab_path);
    CHECK(vocab.dump_entry(4, true) == "4: 3,0 | 3 | 4");

    // Re-running ingest without --force is a cache hit (source unchanged).
    CHECK(run_cli({"ingest", "--train", tsv, "--out", cache}) == 0);
}

TEST_CASE("cli pipeline: toy preset, short train, eval, report") {
    const auto cache = tmp_path("sg_toy.sgkg");
    const auto vocab_path = tmp_path("sg_toy.sgv");
    const auto out_dir = tmp_path("sg_toy_run");
    const auto report = tmp_path("sg_toy_report.json");
    CHECK(run_cli({"ingest", "--preset", "toy", "--out", cache}) == 0);
    CHECK(run_cli({"build-vocab", "--graph", cache, "--num-anchors", "20", "--k", "3", "--m", "2", "--out",
                   vocab_path}) == 0);
    CHECK(run_cli({"train", "--graph", cache, "--vocab", vocab_path, "--out", out_dir,
                   "--d-a", "16", "--d-n", "8", "--k-anchors", "3", "--m-neighbors", "2", "--heads", "2",
                   "--batch-size", "8", "--neg-size", "4", "--max-steps", "30", "--valid-interval", "30",
                   "--checkpoint-interval", "30"}) == 0);
    const auto ckpt = out_dir + "/last.ckpt";
    CHECK(std::filesystem::exists(ckpt));
    CHECK(run_cli({"eval", "--checkpoint", ckpt, "--graph", cache, "--vocab", vocab_path,
                   "--split", "test", "--protocol", "sampled", "--seed", "11", "--report", report}) == 0);
    CHECK(std::filesystem::exists(report));
    std::ifstream in(report);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body.find("\"mrr\"") != std::string::npos);
    CHECK(body.find("\"config\"") != std::string::npos);
    CHECK(body.find("format_version") != std::string::npos);

    // The vocabulary refuses to pair with a different graph.
    const auto other = tmp_path("sg_other.sgkg");
    CHECK(run_cli({"ingest", "--preset", "toy", "--seed", "99", "--out", other}) == 0);
    CHECK(run_cli({"dump-subgraph", "--graph", other, "--vocab", vocab_path, "--entity", "4"}) == 1);
}

TEST_CASE("checkpoint config echo rebuilds the model for evaluation") {
    const auto g = make_toy_graph({});
    const auto anchors = select_anchors(g, 10);
    const auto vocab = build_vocabulary(g, anchors, 3, 2);
    RunConfig cfg;
    cfg.d_a = 16;
    cfg.d_n = 8;
    cfg.k_anchors = 3;
    cfg.m_neighbors = 2;
    cfg.heads = 2;
    Rng rng(2);
    auto model = Model::init(cfg.encoder_config(), g.num_entities, g.num_relations, anchors.size(), cfg.gamma, rng);
    const auto path = tmp_path("sg_echo.ckpt");
    CheckpointMeta meta;
    meta.config_echo = cfg.echo();
    save_checkpoint(path, model, nullptr, meta);

    const auto echo = checkpoint_config_echo(path);
    const auto cfg2 = RunConfig::from_echo(echo);
    CHECK(cfg2.d_a == 16);
    CHECK(cfg2.k_anchors == 3);
    Rng rng2(9);
    auto model2 = Model::init(cfg2.encoder_config(), g.num_entities, g.num_relations, anchors.size(), cfg2.gamma, rng2);
    load_checkpoint(path, model2, nullptr);
    CHECK(model2.anchor_table.value.data == model.anchor_table.value.data);

    // ModelScorer scores match a direct encode + kernel computation.
    ScoreConfig sc = cfg2.score_config();
    ModelScorer scorer(model2, vocab, sc);
    const Triple probe = g.test[0];
    float via_scorer;
    scorer.score_triples(&probe, 1, &via_scorer);
    TapeT<float> tape;
    const auto batch = assemble(vocab, {probe.head, probe.tail}, model2.cfg);
    const auto enc = encode(tape, model2, batch, false, nullptr);
    const float* rel = model2.relation_table.value.ptr() + static_cast<std::int64_t>(probe.rel) * 3 * 16;
    float direct;
    score_rows(sc.variant, sc.norm, sc.u, enc->value.ptr(), enc->value.ptr() + 16, rel, rel + 16, rel + 32, 1, 16,
               &direct);
    CHECK(via_scorer == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("toy preset: structure, determinism, and holdout") {
    const auto g1 = make_toy_graph({});
    CHECK(g1.num_entities == 200);
    CHECK(g1.num_relations == 6);
    CHECK(g1.train.size() == 1500);
    CHECK(g1.train == g1.test);  // memorization preset

    const auto g2 = make_toy_graph({});
    CHECK(g1.checksum == g2.checksum);  // deterministic generation

    ToyOptions held;
    held.holdout = 0.1;
    const auto g3 = make_toy_graph(held);
    CHECK(g3.test.size() == 150);
    CHECK(g3.train.size() == 1350);
    CHECK(g3.valid == g3.test);
}
