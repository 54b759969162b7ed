#include "grcert/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <utility>

#include "CLI11.hpp"
#include "grcert/attack.hpp"
#include "grcert/bnb.hpp"
#include "grcert/gmf.hpp"
#include "grcert/graph.hpp"
#include "grcert/idx.hpp"
#include "grcert/lowering.hpp"
#include "grcert/propagate.hpp"
#include "grcert/rng.hpp"
#include "grcert/train.hpp"
#include "json.hpp"

namespace grcert::cli {

namespace {

using nlohmann::json;

std::vector<double> toStd(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

void writeTextFile(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

/// Shared flags describing a branch-and-bound run.
struct BnbFlags {
    bool enabled = false;
    BnBConfig config;
    std::string historyPath;

    void attach(CLI::App* cmd) {
        cmd->add_flag("--bnb", enabled, "refine the bound by branch and bound");
        cmd->add_option("--max-splits", config.maxSplits, "neuron splits to spend")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--timeout-secs", config.timeoutSecs, "wall-clock budget");
        cmd->add_option("--beta-steps", config.betaSteps,
                        "ascent steps for the branch multipliers")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--beta-lr", config.betaLr, "ascent step size");
        cmd->add_option("--history", historyPath, "write the anytime bound history CSV");
    }
};

int cmdCertify(const std::string& model, double delta, double epsilon, bool intervals,
               const BnbFlags& bnb, std::ostream& out) {
    Graph g = loadModel(model);
    if (!bnb.enabled) {
        CertifyOptions opts;
        opts.includeIntervals = intervals;
        CertificateReport rep = certify(g, delta, epsilon, opts);
        out << rep.toJson() << "\n";
        return rep.verdict == Verdict::Robust ? 0 : 1;
    }
    BnBResult r = branchAndBound(g, delta, bnb.config);
    const bool robust = std::max(std::abs(r.best.lo), std::abs(r.best.hi)) <= epsilon;
    json j;
    j["delta"] = delta;
    j["epsilon"] = epsilon;
    j["lo"] = std::vector<double>{r.best.lo};
    j["hi"] = std::vector<double>{r.best.hi};
    j["verdict"] = verdictName(robust ? Verdict::Robust : Verdict::Unknown);
    j["splits"] = r.splits;
    j["domains_explored"] = r.domainsExplored;
    out << j.dump(2) << "\n";
    if (!bnb.historyPath.empty()) writeTextFile(bnb.historyPath, r.historyCsv());
    return robust ? 0 : 1;
}

int cmdBound(const std::string& model, double delta, const BnbFlags& bnb,
             std::ostream& out) {
    Graph g = loadModel(model);
    json j;
    j["delta"] = delta;
    if (bnb.enabled) {
        BnBResult r = branchAndBound(g, delta, bnb.config);
        j["lo"] = std::vector<double>{r.best.lo};
        j["hi"] = std::vector<double>{r.best.hi};
        j["splits"] = r.splits;
        j["domains_explored"] = r.domainsExplored;
        if (!bnb.historyPath.empty()) writeTextFile(bnb.historyPath, r.historyCsv());
    } else {
        ChannelBounds cb = channelVariationBounds(g, delta);
        j["lo"] = toStd(cb.lo);
        j["hi"] = toStd(cb.hi);
    }
    out << j.dump(2) << "\n";
    return 0;
}

struct TrainArgs {
    std::string model, images, labels, testImages, testLabels;
    std::string outModel, metricsPath;
    TrainConfig config;
    std::string agg = "sum";
};

int cmdTrain(const TrainArgs& a, std::ostream& out) {
    Graph g = loadModel(a.model);
    Dataset train = loadIdx(a.images, a.labels, "train");
    Dataset test;
    if (!a.testImages.empty()) test = loadIdx(a.testImages, a.testLabels, "test");
    TrainConfig cfg = a.config;
    cfg.rgrAgg = a.agg == "max" ? RgrAggregation::Max : RgrAggregation::Sum;
    TrainResult res = sgdTrain(g, train, test, cfg);
    const std::string csv = res.metricsCsv();
    if (a.metricsPath.empty()) {
        out << csv;
    } else {
        writeTextFile(a.metricsPath, csv);
    }
    if (!a.outModel.empty()) saveModel(res.graph, a.outModel);
    return 0;
}

struct AttackArgs {
    std::string model, images, labels, witnessPath;
    double delta = 0.1;
    int points = 16;
    AttackConfig config;
};

int cmdAttack(const AttackArgs& a, std::ostream& out) {
    Graph g = loadModel(a.model);
    std::vector<Vector> pts;
    if (!a.images.empty()) {
        pts = loadIdx(a.images, a.labels, "attack").inputs;
    } else {
        // no dataset: seeded uniform points from the unit box
        Graph low = lower(g);
        const int n = low.width(low.inputId());
        Rng rng(a.config.seed);
        for (int i = 0; i < a.points; ++i) {
            Vector x(n);
            for (int j = 0; j < n; ++j) x(j) = rng.uniform();
            pts.push_back(std::move(x));
        }
    }
    UnderApprox ua = pgdVariation(g, pts, a.delta, a.config);
    json j;
    j["delta"] = a.delta;
    j["eps_under"] = toStd(ua.epsUnder);
    j["worst"] = ua.worst();
    if (!a.witnessPath.empty()) {
        json w = json::array();
        for (const Witness& wit : ua.witnesses) {
            w.push_back({{"x", toStd(wit.x)}, {"dx", toStd(wit.dx)}});
        }
        writeTextFile(a.witnessPath, w.dump(2) + "\n");
        j["witness_file"] = a.witnessPath;
    }
    out << j.dump(2) << "\n";
    return 0;
}

int cmdGradcheck(const std::string& model, double delta, double tolerance,
                 std::ostream& out) {
    Graph g = loadModel(model);
    FiniteDiffReport rep = finiteDiffCheck(lower(g), delta, tolerance);
    out << rep.str() << "\n";
    return rep.pass ? 0 : 1;
}

int cmdLower(const std::string& model, const std::string& outPath, std::ostream& out) {
    Graph low = lower(loadModel(model));
    saveModel(low, outPath);
    out << "wrote " << outPath << " (" << low.nodes().size() << " nodes)\n";
    return 0;
}

int cmdInspect(const std::string& model, std::ostream& out) {
    Graph g = loadModel(model);
    std::map<std::string, int> kinds;
    std::int64_t params = 0;
    for (const Node& n : g.nodes()) {
        kinds[nodeKindName(n.kind)] += 1;
        params += n.weight.count() + n.bias.count() + n.kernel.count();
    }
    json j;
    j["nodes"] = g.nodes().size();
    j["kinds"] = kinds;
    j["parameters"] = params;
    j["input_width"] = g.width(g.inputId());
    j["output_width"] = g.width(g.outputId());
    out << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"certifier for global output-variation robustness of feed-forward nets"};
    app.require_subcommand(1);

    std::string model;
    double delta = 0.1, epsilon = 1.0, tolerance = 1e-4;
    bool intervals = false;
    BnbFlags certifyBnb, boundBnb;
    TrainArgs trainArgs;
    AttackArgs attackArgs;
    std::string lowerOut;

    auto* certifyCmd = app.add_subcommand("certify", "prove a (delta, epsilon) certificate");
    certifyCmd->add_option("model", model, "model manifest")->required();
    certifyCmd->add_option("--delta", delta, "perturbation radius")->required();
    certifyCmd->add_option("--epsilon", epsilon, "allowed output variation")->required();
    certifyCmd->add_flag("--intervals", intervals, "include per-relu input intervals");
    certifyBnb.attach(certifyCmd);

    auto* boundCmd = app.add_subcommand("bound", "compute certified variation bounds");
    boundCmd->add_option("model", model, "model manifest")->required();
    boundCmd->add_option("--delta", delta, "perturbation radius")->required();
    boundBnb.attach(boundCmd);

    auto* trainCmd = app.add_subcommand("train", "SGD training with the width regularizer");
    trainCmd->add_option("model", trainArgs.model, "model manifest")->required();
    trainCmd->add_option("--images", trainArgs.images, "IDX training images")->required();
    trainCmd->add_option("--labels", trainArgs.labels, "IDX training labels")->required();
    trainCmd->add_option("--test-images", trainArgs.testImages, "IDX test images");
    trainCmd->add_option("--test-labels", trainArgs.testLabels, "IDX test labels");
    trainCmd->add_option("--lambda-reg", trainArgs.config.lambdaReg,
                         "weight of the bound-width regularizer");
    trainCmd->add_option("--delta", trainArgs.config.delta, "radius the regularizer uses");
    trainCmd->add_option("--lr", trainArgs.config.lr, "learning rate");
    trainCmd->add_option("--batch", trainArgs.config.batch, "mini-batch size");
    trainCmd->add_option("--epochs", trainArgs.config.epochs, "epochs to run");
    trainCmd->add_option("--seed", trainArgs.config.seed, "shuffle seed");
    trainCmd->add_flag("--detach-intervals", trainArgs.config.detachIntervals,
                       "stop gradients at the relu input intervals");
    trainCmd->add_option("--rgr-agg", trainArgs.agg, "channel aggregation")
        ->check(CLI::IsMember({"sum", "max"}));
    trainCmd->add_option("--out", trainArgs.outModel, "write the trained model here");
    trainCmd->add_option("--metrics", trainArgs.metricsPath, "write the metrics CSV here");

    auto* attackCmd = app.add_subcommand("attack", "empirical variation lower bound");
    attackCmd->add_option("model", attackArgs.model, "model manifest")->required();
    attackCmd->add_option("--delta", attackArgs.delta, "perturbation radius")->required();
    attackCmd->add_option("--images", attackArgs.images, "IDX images to attack");
    attackCmd->add_option("--labels", attackArgs.labels, "IDX labels for the images");
    attackCmd->add_option("--points", attackArgs.points,
                          "random start points when no dataset is given");
    attackCmd->add_option("--steps", attackArgs.config.steps, "ascent steps");
    attackCmd->add_option("--restarts", attackArgs.config.restarts, "restarts per channel");
    attackCmd->add_option("--step-size", attackArgs.config.stepSize,
                          "step length as a fraction of delta");
    attackCmd->add_option("--seed", attackArgs.config.seed, "restart seed");
    attackCmd->add_option("--witness-out", attackArgs.witnessPath,
                          "write the witnesses as JSON");

    auto* gradCmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradCmd->add_option("model", model, "model manifest")->required();
    gradCmd->add_option("--delta", delta, "perturbation radius")->required();
    gradCmd->add_option("--tolerance", tolerance, "max relative error accepted");

    auto* lowerCmd = app.add_subcommand("lower", "rewrite conv/maxpool into linear+relu");
    lowerCmd->add_option("model", model, "model manifest")->required();
    lowerCmd->add_option("--out", lowerOut, "output manifest")->required();

    auto* inspectCmd = app.add_subcommand("inspect", "summarize a model");
    inspectCmd->add_option("model", model, "model manifest")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (certifyCmd->parsed()) {
            return cmdCertify(model, delta, epsilon, intervals, certifyBnb, out);
        }
        if (boundCmd->parsed()) return cmdBound(model, delta, boundBnb, out);
        if (trainCmd->parsed()) return cmdTrain(trainArgs, out);
        if (attackCmd->parsed()) return cmdAttack(attackArgs, out);
        if (gradCmd->parsed()) return cmdGradcheck(model, delta, tolerance, out);
        if (lowerCmd->parsed()) return cmdLower(model, lowerOut, out);
        if (inspectCmd->parsed()) return cmdInspect(model, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << "error: no command given\n";
    return 2;
}

}  // namespace grcert::cli
