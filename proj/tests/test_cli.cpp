#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "endoshift/cli.hpp"
#include "endoshift/dataset.hpp"
#include "endoshift/image_io.hpp"
#include "support/fixtures.hpp"

using namespace endoshift;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(std::initializer_list<std::string> args)
{
    std::vector<std::string> owned{"endoshift"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : owned)
        argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const char* name)
{
    const fs::path dir = fs::temp_directory_path() / "endoshift_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Workspace {
    fs::path root;
    fs::path manifest;
    fs::path reference;
};

Workspace make_workspace(const char* name, Cohort cohort = Cohort::IdTest)
{
    Workspace w;
    w.root = scratch(name);
    w.manifest = testsupport::write_synthetic_dataset(w.root / "data", cohort, 4, 4, 3, 32, 24);
    w.reference = w.root / "reference.png";
    write_png(w.reference, testsupport::natural_image(999, 32, 24));
    return w;
}

void write_cell(const fs::path& root, const DatasetManifest& m, const std::string& model, std::int64_t seed,
                Condition c, Cohort cohort)
{
    const auto preds = testsupport::synthetic_predictions(c == Condition::ColorShift ? testsupport::shifted_view(m) : m,
                                                          model, seed, c, 0.8);
    testsupport::save_predictions(root / "predictions" / model / std::to_string(seed) / std::string(to_string(c)) /
                                      (std::string(to_string(cohort)) + ".jsonl"),
                                  preds);
}

void write_config(const Workspace& w, const json& extra = json::object())
{
    json cfg{{"manifests", {{"id_test", "data/manifest.tsv"}}},
             {"reference", "reference.png"},
             {"seeds", {0}},
             {"models", {"resnet50"}},
             {"output", "out"}};
    for (auto it = extra.begin(); it != extra.end(); ++it)
        cfg[it.key()] = it.value();
    std::ofstream(w.root / "run.json") << cfg.dump(2);
}

} // namespace

TEST_CASE("help and argument errors")
{
    CHECK(run({"--help"}) == 0);
    CHECK(run({"shift", "--help"}) == 0);
    CHECK(run({}) == 2);
    CHECK(run({"shift", "--out", "x"}) == 2);
    CHECK(run({"bogus"}) == 2);
    CHECK(run({"summary", "--manifest", "/nonexistent/manifest.tsv"}) == 2);
}

TEST_CASE("summary reports leakage through the exit code")
{
    const fs::path dir = scratch("summary");
    DatasetManifest m;
    m.records.push_back({"a.png", Label::Tumor, Timepoint::Baseline, "P1", Cohort::IdTrain, false});
    m.records.push_back({"b.png", Label::NoTumor, Timepoint::Baseline, "P2", Cohort::IdTest, false});
    save_manifest(dir / "clean.tsv", m);
    CHECK(run({"summary", "--manifest", (dir / "clean.tsv").string()}) == 0);
    m.records.push_back({"c.png", Label::NoTumor, Timepoint::Baseline, "P1", Cohort::Ood, false});
    save_manifest(dir / "leaky.tsv", m);
    CHECK(run({"summary", "--manifest", (dir / "leaky.tsv").string()}) == 2);
}

TEST_CASE("malformed manifest exits 2")
{
    const fs::path dir = scratch("bad_manifest");
    std::ofstream(dir / "m.tsv") << "a.png\tmaybe\tbaseline\tP1\tid_test\n";
    CHECK(run({"summary", "--manifest", (dir / "m.tsv").string()}) == 2);
}

TEST_CASE("shift writes images, manifest and report")
{
    const Workspace w = make_workspace("shift");
    const fs::path out = w.root / "shifted";
    REQUIRE(run({"shift", "--manifest", w.manifest.string(), "--reference", w.reference.string(), "--out",
                 out.string(), "--side-by-side"}) == 0);
    const DatasetManifest shifted = load_manifest(out / "manifest.tsv");
    REQUIRE(shifted.records.size() == 8);
    CHECK(shifted.records[0].image_path == testsupport::shifted_view(load_manifest(w.manifest)).records[0].image_path);
    for (const auto& r : shifted.records) {
        CHECK(r.color_shift);
        CHECK(fs::exists(shifted.resolve(r)));
    }
    CHECK(read_png_text(shifted.resolve(shifted.records[0])).count("provenance") == 1);
    CHECK(fs::exists(out / "shift_report.json"));
    CHECK(fs::is_directory(out / "side_by_side"));
    CHECK(run({"shift", "--manifest", w.manifest.string(), "--reference", w.reference.string(), "--out",
               out.string(), "--epsilon", "-1"}) == 2);
}

TEST_CASE("preprocess writes tensors and an index")
{
    const Workspace w = make_workspace("preprocess");
    const fs::path out = w.root / "pre";
    REQUIRE(run({"preprocess", "--manifest", w.manifest.string(), "--out", out.string()}) == 0);
    std::ifstream in(out / "index.json");
    const json index = json::parse(in);
    REQUIRE(index["records"].size() == 8);
    CHECK(index["tensor"]["shape"] == json::array({3, 224, 224}));
    CHECK(index["provenance"]["provenance"].get<std::string>().rfind("endoshift 0.1.0 sha256:", 0) == 0);
    const fs::path npy = out / index["records"][0]["tensor"].get<std::string>();
    CHECK(fs::file_size(npy) == 128 + 3 * 224 * 224 * 4);
}

TEST_CASE("plan emits balanced batches")
{
    const fs::path dir = scratch("plan");
    DatasetManifest m;
    for (int i = 0; i < 10; ++i)
        m.records.push_back({"t" + std::to_string(i) + ".png", i < 3 ? Label::Tumor : Label::NoTumor,
                             Timepoint::Baseline, "P" + std::to_string(i), Cohort::IdTrain, false});
    save_manifest(dir / "m.tsv", m);
    REQUIRE(run({"plan", "--manifest", (dir / "m.tsv").string(), "--batch", "4", "--seed", "7", "--out",
                 (dir / "plan.json").string()}) == 0);
    std::ifstream in(dir / "plan.json");
    const json plan = json::parse(in);
    REQUIRE(!plan["batches"].empty());
    for (const auto& batch : plan["batches"]) {
        REQUIRE(batch.size() == 4);
        int tumor = 0;
        for (const auto& p : batch)
            tumor += p.get<std::string>()[0] == 't' && std::stoi(p.get<std::string>().substr(1)) < 3;
        CHECK(tumor == 2);
    }
    CHECK(run({"plan", "--manifest", (dir / "m.tsv").string(), "--batch", "3"}) == 2);
}

TEST_CASE("score and report")
{
    const Workspace w = make_workspace("score");
    const DatasetManifest m = load_manifest(w.manifest);
    const fs::path preds = w.root / "preds.jsonl";
    auto all = testsupport::synthetic_predictions(m, "resnet50", 0, Condition::NoShift, 0.8);
    for (auto& p : testsupport::synthetic_predictions(m, "resnet50", 1, Condition::NoShift, 0.8))
        all.push_back(p);
    testsupport::save_predictions(preds, all);

    const fs::path out = w.root / "scored";
    REQUIRE(run({"score", "--predictions", preds.string(), "--manifest", w.manifest.string(), "--cohort", "id_test",
                 "--out", out.string()}) == 0);
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "cm_resnet50_no_shift.png"));

    const fs::path again = w.root / "rerendered";
    REQUIRE(run({"report", "--input", (out / "report.json").string(), "--out", again.string()}) == 0);
    CHECK(testsupport::read_file(again / "cm_resnet50_no_shift.png") ==
          testsupport::read_file(out / "cm_resnet50_no_shift.png"));

    all.push_back({"images/nowhere.png", 0.9, "resnet50", 0, Condition::NoShift});
    testsupport::save_predictions(preds, all);
    CHECK(run({"score", "--predictions", preds.string(), "--manifest", w.manifest.string(), "--cohort", "id_test",
               "--out", out.string()}) == 2);
}

TEST_CASE("evaluate runs the full matrix")
{
    const Workspace w = make_workspace("evaluate");
    const DatasetManifest m = load_manifest(w.manifest);
    write_cell(w.root, m, "resnet50", 0, Condition::NoShift, Cohort::IdTest);
    write_cell(w.root, m, "resnet50", 0, Condition::ColorShift, Cohort::IdTest);
    write_config(w);
    REQUIRE(run({"evaluate", "--config", (w.root / "run.json").string()}) == 0);
    const fs::path report = w.root / "out" / "report";
    CHECK(fs::exists(report / "report.json"));
    CHECK(fs::exists(report / "cm_resnet50_no_shift.png"));
    CHECK(fs::exists(report / "cm_resnet50_color_shift.png"));
    CHECK(read_png_text(report / "cm_resnet50_color_shift.png").at("provenance").rfind("endoshift 0.1.0 sha256:", 0) ==
          0);
    CHECK(fs::exists(w.root / "out" / "shifted" / "id_test" / "manifest.tsv"));
}

TEST_CASE("evaluate with a missing cell exits 3")
{
    const Workspace w = make_workspace("evaluate_partial");
    const DatasetManifest m = load_manifest(w.manifest);
    write_cell(w.root, m, "resnet50", 0, Condition::NoShift, Cohort::IdTest);
    write_config(w);
    CHECK(run({"evaluate", "--config", (w.root / "run.json").string()}) == 3);
    CHECK(fs::exists(w.root / "out" / "report" / "cm_resnet50_no_shift.png"));
    CHECK(!fs::exists(w.root / "out" / "report" / "cm_resnet50_color_shift.png"));
    const std::string text = testsupport::read_file(w.root / "out" / "report" / "report.json");
    CHECK(text.find("model=resnet50 seed=0 condition=color_shift cohort=id_test") != std::string::npos);
}

TEST_CASE("evaluate rejects bad configs")
{
    const Workspace w = make_workspace("evaluate_bad");
    write_config(w, {{"seeds", json::array()}});
    CHECK(run({"evaluate", "--config", (w.root / "run.json").string()}) == 2);
    write_config(w, {{"colour", true}});
    CHECK(run({"evaluate", "--config", (w.root / "run.json").string()}) == 2);
    write_config(w, {{"reference", "missing.png"}});
    CHECK(run({"evaluate", "--config", (w.root / "run.json").string()}) == 2);
    std::ofstream(w.root / "run.json") << "{ not json";
    CHECK(run({"evaluate", "--config", (w.root / "run.json").string()}) == 2);
}

TEST_CASE("evaluate with no predictions at all exits 2")
{
    const Workspace w = make_workspace("evaluate_empty");
    write_config(w);
    CHECK(run({"evaluate", "--config", (w.root / "run.json").string()}) == 2);
}

TEST_CASE("full four-model matrix yields two tables and eight confusion matrices, all stamped")
{
    const fs::path root = scratch("evaluate_full");
    const std::vector<std::string> models{"resnet50", "vit_base16", "swin_base", "convnext_base"};
    json manifests = json::object();
    std::uint64_t seed = 40;
    for (Cohort cohort : {Cohort::IdTest, Cohort::FollowupLr, Cohort::Ood}) {
        const std::string name(to_string(cohort));
        const auto path = testsupport::write_synthetic_dataset(root / name, cohort, 3, 3, seed++, 24, 20);
        manifests[name] = name + "/manifest.tsv";
        const DatasetManifest m = load_manifest(path);
        for (const auto& model : models)
            for (Condition c : {Condition::NoShift, Condition::ColorShift})
                write_cell(root, m, model, 0, c, cohort);
    }
    write_png(root / "reference.png", testsupport::natural_image(41, 24, 20));
    std::ofstream(root / "run.json") << json{{"manifests", manifests},
                                             {"reference", "reference.png"},
                                             {"seeds", {0}},
                                             {"models", models},
                                             {"output", "out"}}
                                            .dump();
    REQUIRE(run({"evaluate", "--config", (root / "run.json").string()}) == 0);

    std::size_t tables = 0, cms = 0;
    std::string stamp;
    for (const auto& e : fs::directory_iterator(root / "out" / "report")) {
        const std::string name = e.path().filename().string();
        if (name.rfind("cm_", 0) == 0) {
            ++cms;
            stamp = read_png_text(e.path()).at("provenance");
        }
    }
    REQUIRE(!stamp.empty());
    for (const auto& e : fs::directory_iterator(root / "out" / "report")) {
        const std::string name = e.path().filename().string();
        if (name.rfind("table_", 0) == 0) {
            ++tables;
            CHECK(testsupport::read_file(e.path()).find(stamp) != std::string::npos);
        }
        if (name.rfind("cm_", 0) == 0)
            CHECK(read_png_text(e.path()).at("provenance") == stamp);
    }
    CHECK(tables == 2);
    CHECK(cms == 8);
    CHECK(testsupport::read_file(root / "out" / "report" / "report.json").find(stamp) != std::string::npos);
    const fs::path shifted = root / "out" / "shifted" / "ood";
    CHECK(testsupport::read_file(shifted / "manifest.tsv").find(stamp) != std::string::npos);
    CHECK(testsupport::read_file(shifted / "shift_report.json").find(stamp) != std::string::npos);
    const DatasetManifest sm = load_manifest(shifted / "manifest.tsv");
    for (const auto& r : sm.records)
        CHECK(read_png_text(sm.resolve(r)).at("provenance") == stamp);
}
