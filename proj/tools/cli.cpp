#include "cli.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "stargraph/checkpoint.hpp"
#include "stargraph/config.hpp"
#include "stargraph/evaluator.hpp"
#include "stargraph/gradcheck_suite.hpp"
#include "stargraph/toy.hpp"
#include "stargraph/trainer.hpp"
#include "stargraph/util.hpp"
#include "stargraph/vocab.hpp"

namespace stargraph {

namespace {

struct IngestArgs {
    std::string train_path, valid_path, test_path;
    std::string format = "ids";
    std::string out;
    std::string preset;
    std::int64_t num_entities = -1, num_relations = -1;
    bool dedup = false;
    double holdout = 0.0;
    std::uint64_t seed = 7;
    bool force = false;
};

int run_ingest(const IngestArgs& a, const RunConfig& cfg) {
    if (!a.preset.empty()) {
        if (a.preset != "toy") fail("unknown preset '" + a.preset + "' (only 'toy' is built in)");
        ToyOptions opt;
        opt.seed = a.seed;
        opt.holdout = a.holdout;
        auto g = make_toy_graph(opt);
        g.config_echo = cfg.echo();
        g.save(a.out);
        std::printf("wrote %s: %" PRId64 " entities, %" PRId64 " relations, train/valid/test = %zu/%zu/%zu\n",
                    a.out.c_str(), g.num_entities, g.num_relations, g.train.size(), g.valid.size(), g.test.size());
        return 0;
    }
    if (a.train_path.empty()) fail("ingest requires --train (or --preset toy)");

    IngestOptions opt;
    opt.format = a.format == "labels" ? TripleFormat::Labels : TripleFormat::Ids;
    if (a.format != "ids" && a.format != "labels") fail("--format must be ids or labels");
    opt.num_entities = a.num_entities;
    opt.num_relations = a.num_relations;
    opt.dedup = a.dedup;

    // Skip regeneration when the cache is current for these sources.
    if (!a.force && std::filesystem::exists(a.out)) {
        Fnv1a src;
        src.update_value(checksum_file(a.train_path));
        if (!a.valid_path.empty()) src.update_value(checksum_file(a.valid_path));
        if (!a.test_path.empty()) src.update_value(checksum_file(a.test_path));
        try {
            const auto cached = Graph::load(a.out);
            if (cached.source_checksum == src.digest()) {
                std::printf("%s is up to date (source checksum unchanged)\n", a.out.c_str());
                return 0;
            }
        } catch (const std::exception&) {
            log_warn("existing cache unreadable; regenerating");
        }
    }
    auto g = ingest(a.train_path, a.valid_path, a.test_path, opt);
    g.config_echo = cfg.echo();
    g.save(a.out);
    std::printf("wrote %s: %" PRId64 " entities, %" PRId64 " relations, train/valid/test = %zu/%zu/%zu\n", a.out.c_str(),
                g.num_entities, g.num_relations, g.train.size(), g.valid.size(), g.test.size());
    return 0;
}

std::int64_t default_anchor_count(std::int64_t num_entities) {
    const auto c = static_cast<std::int64_t>(std::ceil(0.004 * static_cast<double>(num_entities)));
    return std::max<std::int64_t>(1, std::min(c, num_entities - 1));
}

int run_build_vocab(const std::string& graph_path, const std::string& out, const std::string& dump_text,
                    const RunConfig& cfg) {
    const auto graph = Graph::load(graph_path);
    const auto count = cfg.num_anchors > 0 ? cfg.num_anchors : default_anchor_count(graph.num_entities);
    const auto anchors = select_anchors(graph, count);
    auto vocab = build_vocabulary(graph, anchors, cfg.k_anchors, cfg.m_neighbors, cfg.bfs_cap, cfg.threads);
    vocab.config_echo = cfg.echo();
    vocab.save(out);
    std::printf("wrote %s: |A|=%" PRId64 ", k=%d, m=%d over %" PRId64 " entities\n", out.c_str(), vocab.num_anchors(),
                vocab.k, vocab.m, vocab.num_entities);
    if (!dump_text.empty()) {
        std::ofstream txt(dump_text);
        if (!txt) fail("cannot open " + dump_text);
        for (EntityId u = 0; u < graph.num_entities; ++u) txt << vocab.dump_entry(u, /*with_center=*/false) << "\n";
        std::printf("wrote %s\n", dump_text.c_str());
    }
    return 0;
}

void check_vocab_graph(const Vocabulary& vocab, const Graph& graph) { vocab.verify_graph(graph); }

int run_train(const std::string& graph_path, const std::string& vocab_path, const std::string& out_dir,
              const std::string& resume, const RunConfig& cfg) {
    const auto graph = Graph::load(graph_path);
    const auto vocab = Vocabulary::load(vocab_path);
    check_vocab_graph(vocab, graph);

    Rng rng(cfg.seed);
    auto model = Model::init(cfg.encoder_config(), graph.num_entities, graph.num_relations, vocab.num_anchors(),
                             cfg.gamma, rng);
    const auto result =
        train(graph, vocab, model, cfg.score_config(), cfg.train_config(), out_dir, cfg.echo(), resume);
    std::printf("trained %" PRId64 " steps, final loss %.5f, best valid MRR %.4f (step %" PRId64 ")\n", result.steps,
                result.final_loss, result.best_valid_mrr, result.best_valid_step);
    std::printf("checkpoints: %s%s%s\n", result.last_checkpoint.c_str(), result.best_checkpoint.empty() ? "" : ", ",
                result.best_checkpoint.c_str());
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& graph_path, const std::string& vocab_path,
             const std::string& split, const std::string& protocol, std::uint64_t seed, std::int64_t num_negatives,
             const std::string& report_path, int threads) {
    const auto graph = Graph::load(graph_path);
    const auto vocab = Vocabulary::load(vocab_path);
    check_vocab_graph(vocab, graph);

    const auto echo = checkpoint_config_echo(ckpt_path);
    const auto cfg = RunConfig::from_echo(echo);
    Rng rng(cfg.seed);
    auto model = Model::init(cfg.encoder_config(), graph.num_entities, graph.num_relations, vocab.num_anchors(),
                             cfg.gamma, rng);
    load_checkpoint(ckpt_path, model, nullptr);

    const auto* triples = split == "valid" ? &graph.valid : &graph.test;
    if (split != "valid" && split != "test") fail("--split must be valid or test");

    EvalConfig ec;
    if (protocol == "full")
        ec.protocol = Protocol::Full;
    else if (protocol == "sampled")
        ec.protocol = Protocol::Sampled;
    else
        fail("--protocol must be full or sampled");
    ec.seed = seed;
    ec.num_negatives = num_negatives;
    ec.threads = threads;

    ModelScorer scorer(model, vocab, cfg.score_config());
    const auto report = evaluate(graph, *triples, scorer, ec);
    std::printf("%s %s: MRR %.4f, hits@1 %.4f, hits@3 %.4f, hits@10 %.4f over %" PRId64 " queries\n", split.c_str(),
                protocol.c_str(), report.mrr, report.hits1, report.hits3, report.hits10, report.queries);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) fail("cannot open " + report_path);
        out << report_json(report, echo);
        std::printf("wrote %s\n", report_path.c_str());
    }
    return 0;
}

int run_grad_check(std::uint64_t seed, int seeds_per_op, double eps, double tol) {
    const auto suite = run_gradcheck_suite(seed, seeds_per_op, eps, tol);
    std::printf("%-26s %-14s %-12s %s\n", "op", "max_rel_err", "status", "worst parameter");
    for (const auto& e : suite.entries)
        std::printf("%-26s %-14.3e %-12s %s\n", e.op.c_str(), e.max_rel_err, e.pass ? "ok" : "FAIL",
                    e.worst_param.c_str());
    std::printf("%s (tolerance %.1e, %d seeds per op)\n", suite.pass ? "all gradients verified" : "GRADIENT CHECK FAILED",
                tol, seeds_per_op);
    return suite.pass ? 0 : 1;
}

int run_dump_subgraph(const std::string& graph_path, const std::string& vocab_path, EntityId entity) {
    const auto graph = Graph::load(graph_path);
    const auto vocab = Vocabulary::load(vocab_path);
    check_vocab_graph(vocab, graph);
    std::printf("%s\n", vocab.dump_entry(entity, /*with_center=*/true).c_str());
    return 0;
}

void add_config_options(CLI::App* cmd, RunConfig& cfg, std::string& config_path) {
    cmd->add_option("--config", config_path, "flat key=value config file (unknown keys are rejected)");
    cmd->add_option("--seed", cfg.seed, "RNG seed (default 1)");
    cmd->add_option("--threads", cfg.threads, "worker pool cap; 1 guarantees bit-reproducibility (default 1)");
    cmd->add_option("--d-a", cfg.d_a, "anchor embedding size D_A (default 256)");
    cmd->add_option("--d-n", cfg.d_n, "node embedding size D_N (default 32)");
    cmd->add_option("--k-anchors", cfg.k_anchors, "anchors per subgraph (default 20)");
    cmd->add_option("--m-neighbors", cfg.m_neighbors, "neighbors per subgraph (default 5)");
    cmd->add_option("--use-neighbors", cfg.use_neighbors, "include neighbor tokens (default true)");
    cmd->add_option("--use-center", cfg.use_center, "include the center token (default true)");
    cmd->add_option("--encoder", cfg.encoder, "encoder: attention|mlp (default attention)");
    cmd->add_option("--heads", cfg.heads, "attention heads (default 4)");
    cmd->add_option("--ffn-mult", cfg.ffn_mult, "feed-forward width multiplier (default 4)");
    cmd->add_option("--score", cfg.score, "score: triplere_prime|triplere_v2 (default triplere_prime)");
    cmd->add_option("--u", cfg.u, "score constant u (default 0.1)");
    cmd->add_option("--norm", cfg.norm, "score norm: l1|l2 (default l1)");
    cmd->add_option("--gamma", cfg.gamma, "loss margin gamma (default 6.0)");
    cmd->add_option("--alpha", cfg.alpha, "adversarial softmax temperature (default 1.0)");
    cmd->add_option("--batch-size", cfg.batch_size, "positives per step (default 512)");
    cmd->add_option("--neg-size", cfg.neg_size, "negatives per positive (default 64)");
    cmd->add_option("--max-steps", cfg.max_steps, "training steps (default 500000)");
    cmd->add_option("--lr", cfg.lr, "learning rate (default 0.0005, decayed x0.1 at half)");
    cmd->add_option("--lr-decay-factor", cfg.lr_decay_factor, "decay factor at max_steps/2 (default 0.1)");
    cmd->add_option("--dropout", cfg.dropout, "dropout after each linear layer (default 0.05)");
    cmd->add_option("--weight-decay", cfg.weight_decay, "AdamW weight decay (default 0)");
    cmd->add_option("--checkpoint-interval", cfg.checkpoint_interval, "steps between checkpoints (default 10000)");
    cmd->add_option("--valid-interval", cfg.valid_interval, "steps between valid evaluations (default 10000)");
    cmd->add_option("--num-anchors", cfg.num_anchors, "anchor set size |A| (default: 0.4% of entities)");
    cmd->add_option("--bfs-cap", cfg.bfs_cap, "BFS hop cap for anchor sampling (default 10)");
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"StarGraph knowledge-graph embeddings: coarse-to-fine subgraph vocabularies, a single-block\n"
                 "self-attention entity encoder, TripleRE-family scoring, self-adversarial training, and\n"
                 "filtered-MRR link-prediction evaluation."};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;

    // ingest
    IngestArgs ia;
    auto* ingest_cmd = app.add_subcommand("ingest", "parse TSV splits (or generate a preset) into a graph cache");
    ingest_cmd->add_option("--train", ia.train_path, "train split TSV (3 whitespace-separated fields per line)");
    ingest_cmd->add_option("--valid", ia.valid_path, "valid split TSV");
    ingest_cmd->add_option("--test", ia.test_path, "test split TSV");
    ingest_cmd->add_option("--format", ia.format, "ids|labels (default ids)");
    ingest_cmd->add_option("--num-entities", ia.num_entities, "declared entity count (id mode; default: max id + 1)");
    ingest_cmd->add_option("--num-relations", ia.num_relations, "declared relation count (id mode)");
    ingest_cmd->add_flag("--dedup", ia.dedup, "drop duplicate triples within each split");
    ingest_cmd->add_option("--preset", ia.preset, "built-in dataset: toy (200 entities, 6 compositional relations)");
    ingest_cmd->add_option("--holdout", ia.holdout, "toy preset: fraction held out as test (default 0 = train=test)");
    ingest_cmd->add_option("--seed", ia.seed, "toy preset generation seed (default 7)");
    ingest_cmd->add_flag("--force", ia.force, "regenerate even when the source checksum is unchanged");
    ingest_cmd->add_option("--out", ia.out, "output graph cache (SGKG1)")->required();

    // build-vocab
    std::string graph_path, vocab_out, dump_text;
    auto* bv = app.add_subcommand("build-vocab", "select anchors and build per-entity token sets");
    bv->add_option("--graph", graph_path, "graph cache file")->required();
    bv->add_option("--out", vocab_out, "output vocabulary (SGVC1)")->required();
    bv->add_option("--dump-text", dump_text, "also write 'entity: a1,..,ak | n1,..,nm' lines for diffing");
    bv->add_option("--num-anchors", cfg.num_anchors, "anchor set size |A| (default: 0.4% of entities)");
    bv->add_option("--k", cfg.k_anchors, "anchors per subgraph (default 20)");
    bv->add_option("--m", cfg.m_neighbors, "neighbors per subgraph (default 5)");
    bv->add_option("--bfs-cap", cfg.bfs_cap, "BFS hop cap (default 10)");
    bv->add_option("--threads", cfg.threads, "worker threads (default 1)");

    // train
    std::string train_graph, train_vocab, train_out, resume;
    auto* tr = app.add_subcommand("train", "train entity encoder and relation embeddings");
    tr->add_option("--graph", train_graph, "graph cache file")->required();
    tr->add_option("--vocab", train_vocab, "vocabulary file")->required();
    tr->add_option("--out", train_out, "output directory (checkpoints, metrics.csv)")->required();
    tr->add_option("--resume", resume, "checkpoint to resume from");
    add_config_options(tr, cfg, config_path);

    // eval
    std::string eval_ckpt, eval_graph, eval_vocab, eval_split = "test", eval_protocol = "full", eval_report;
    std::uint64_t eval_seed = 0;
    std::int64_t eval_negs = 1000;
    int eval_threads = 1;
    auto* ev = app.add_subcommand("eval", "filtered link-prediction evaluation (MRR, hits@k)");
    ev->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    ev->add_option("--graph", eval_graph, "graph cache file")->required();
    ev->add_option("--vocab", eval_vocab, "vocabulary file")->required();
    ev->add_option("--split", eval_split, "valid|test (default test)");
    ev->add_option("--protocol", eval_protocol, "full|sampled (default full)");
    ev->add_option("--seed", eval_seed, "negative sampling seed for the sampled protocol");
    ev->add_option("--num-negatives", eval_negs, "negatives per side in the sampled protocol (default 1000)");
    ev->add_option("--threads", eval_threads, "worker threads (default 1)");
    ev->add_option("--report", eval_report, "write a JSON report here");

    // grad-check
    std::uint64_t gc_seed = 1;
    int gc_seeds = 5;
    double gc_eps = 1e-3, gc_tol = 1e-4;
    auto* gc = app.add_subcommand("grad-check", "verify analytic gradients against central finite differences");
    gc->add_option("--seed", gc_seed, "base seed (default 1)");
    gc->add_option("--seeds-per-op", gc_seeds, "random draws per op (default 5)");
    gc->add_option("--eps", gc_eps, "finite-difference step (default 1e-3)");
    gc->add_option("--tolerance", gc_tol, "max relative error (default 1e-4)");

    // dump-subgraph
    std::string ds_graph, ds_vocab;
    EntityId ds_entity = 0;
    auto* ds = app.add_subcommand("dump-subgraph", "print one entity's tokens: 'entity: anchors | neighbors | center'");
    ds->add_option("--graph", ds_graph, "graph cache file")->required();
    ds->add_option("--vocab", ds_vocab, "vocabulary file")->required();
    ds->add_option("--entity", ds_entity, "entity id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (!config_path.empty()) {
            // File first, then explicit flags back on top.
            RunConfig from_file;
            from_file.apply_file(config_path);
            RunConfig flags = cfg;
            cfg = from_file;
            for (const auto* opt : tr->get_options()) {
                if (opt->count() == 0 || opt->get_name() == "--config") continue;
                (void)flags;  // flags already parsed into cfg fields; reapply below
            }
            // Re-parse the train flags on top of the file-provided config.
            // CLI11 already wrote flag values into the original cfg copy;
            // copy over only the ones the user actually passed.
            auto reapply = [&](const std::string& flag, auto member) {
                const auto* opt = tr->get_option(flag);
                if (opt->count() > 0) cfg.*member = flags.*member;
            };
            reapply("--seed", &RunConfig::seed);
            reapply("--threads", &RunConfig::threads);
            reapply("--d-a", &RunConfig::d_a);
            reapply("--d-n", &RunConfig::d_n);
            reapply("--k-anchors", &RunConfig::k_anchors);
            reapply("--m-neighbors", &RunConfig::m_neighbors);
            reapply("--use-neighbors", &RunConfig::use_neighbors);
            reapply("--use-center", &RunConfig::use_center);
            reapply("--encoder", &RunConfig::encoder);
            reapply("--heads", &RunConfig::heads);
            reapply("--ffn-mult", &RunConfig::ffn_mult);
            reapply("--score", &RunConfig::score);
            reapply("--u", &RunConfig::u);
            reapply("--norm", &RunConfig::norm);
            reapply("--gamma", &RunConfig::gamma);
            reapply("--alpha", &RunConfig::alpha);
            reapply("--batch-size", &RunConfig::batch_size);
            reapply("--neg-size", &RunConfig::neg_size);
            reapply("--max-steps", &RunConfig::max_steps);
            reapply("--lr", &RunConfig::lr);
            reapply("--lr-decay-factor", &RunConfig::lr_decay_factor);
            reapply("--dropout", &RunConfig::dropout);
            reapply("--weight-decay", &RunConfig::weight_decay);
            reapply("--checkpoint-interval", &RunConfig::checkpoint_interval);
            reapply("--valid-interval", &RunConfig::valid_interval);
            reapply("--num-anchors", &RunConfig::num_anchors);
            reapply("--bfs-cap", &RunConfig::bfs_cap);
        }

        if (*ingest_cmd) return run_ingest(ia, cfg);
        if (*bv) return run_build_vocab(graph_path, vocab_out, dump_text, cfg);
        if (*tr) return run_train(train_graph, train_vocab, train_out, resume, cfg);
        if (*ev) return run_eval(eval_ckpt, eval_graph, eval_vocab, eval_split, eval_protocol, eval_seed, eval_negs,
                                 eval_report, eval_threads);
        if (*gc) return run_grad_check(gc_seed, gc_seeds, gc_eps, gc_tol);
        if (*ds) return run_dump_subgraph(ds_graph, ds_vocab, ds_entity);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace stargraph
