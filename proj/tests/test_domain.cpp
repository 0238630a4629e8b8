#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "promptstab/domain.hpp"
#include "promptstab/util.hpp"

using namespace promptstab;
using nlohmann::json;
using testutil::abc_task;
using testutil::make_example;
using testutil::probs_of;
using testutil::TempDir;

TEST_CASE("validate_task accepts a well-formed task") {
  CHECK_NOTHROW(validate_task(abc_task()));
}

TEST_CASE("validate_task rejects structural problems") {
  Task task = abc_task();
  task.id = "";
  CHECK_THROWS_AS(validate_task(task), std::invalid_argument);

  task = abc_task();
  task.label_set = {"only"};
  CHECK_THROWS_AS(validate_task(task), std::invalid_argument);

  task = abc_task();
  task.label_set = {"alpha", " alpha "};  // duplicate after trimming
  CHECK_THROWS_AS(validate_task(task), std::invalid_argument);

  task = abc_task();
  task.label_set = {"alpha", "  "};
  CHECK_THROWS_AS(validate_task(task), std::invalid_argument);

  task = abc_task();
  task.input_fields = {"text", "text"};
  CHECK_THROWS_AS(validate_task(task), std::invalid_argument);
}

TEST_CASE("label_index trims but stays case-sensitive") {
  const Task task = abc_task();
  CHECK(label_index(task, "beta") == 1);
  CHECK(label_index(task, "  beta \t") == 1);
  CHECK(label_index(task, "Beta") == -1);
  CHECK(label_index(task, "delta") == -1);
  CHECK(label_index(task, "") == -1);
}

TEST_CASE("placeholders finds identifier-shaped names only") {
  const auto names = placeholders("{text} then {other_1} and {_x} but not {9bad} or {unclosed");
  CHECK(names == std::set<std::string>{"text", "other_1", "_x"});
  CHECK(placeholders("{a} {a} {a}").size() == 1);
  CHECK(placeholders("no braces at all").empty());
  CHECK(placeholders("empty {} braces").empty());
}

TEST_CASE("validate_prompt requires exactly the task fields") {
  const Task task = abc_task();
  Prompt prompt{"p", "Classify: {text}", Provenance::manual()};
  CHECK_NOTHROW(validate_prompt(prompt, task));

  prompt.text = "Classify: {text} with {extra}";
  CHECK_THROWS_AS(validate_prompt(prompt, task), std::invalid_argument);

  prompt.text = "No placeholder here";
  CHECK_THROWS_AS(validate_prompt(prompt, task), std::invalid_argument);
}

TEST_CASE("render_prompt substitutes known fields and keeps the rest verbatim") {
  const Example example = make_example("e1", "hello world", "alpha");
  Prompt prompt{"p", "Input: {text} / again {text} / unknown {other}", Provenance::manual()};
  CHECK(render_prompt(prompt, example) ==
        "Input: hello world / again hello world / unknown {other}");
}

TEST_CASE("from_label canonicalizes against the label set") {
  const Task task = abc_task();
  const Prediction pred = Prediction::from_label(task, "  beta ", "raw");
  CHECK(pred.label == "beta");
  CHECK_FALSE(pred.probs.has_value());
  CHECK(pred.raw_output == "raw");
  CHECK_THROWS_AS(Prediction::from_label(task, "delta", ""), std::invalid_argument);
}

TEST_CASE("from_probs validates and takes the argmax") {
  const Task task = abc_task();
  const Prediction pred = probs_of(task, {0.2, 0.5, 0.3});
  CHECK(pred.label == "beta");
  REQUIRE(pred.probs.has_value());
  CHECK(pred.probs->at("gamma") == doctest::Approx(0.3));

  // Exact tie: earlier label in label_set order wins.
  CHECK(probs_of(task, {0.4, 0.4, 0.2}).label == "alpha");

  CHECK_THROWS_AS(Prediction::from_probs(task, {{"alpha", 1.0}}, ""), std::invalid_argument);
  CHECK_THROWS_AS(probs_of(task, {0.5, 0.6, -0.1}), std::invalid_argument);
  CHECK_THROWS_AS(probs_of(task, {0.5, 0.3, 0.1}), std::invalid_argument);  // sums to 0.9
  CHECK_NOTHROW(probs_of(task, {0.2, 0.5, 0.3000000001}));                  // within tolerance
}

TEST_CASE("argmax_label throws when no task label is present") {
  CHECK_THROWS_AS(argmax_label(abc_task(), {{"delta", 1.0}}), std::invalid_argument);
}

TEST_CASE("validate_dataset reports duplicate ids and out-of-set labels") {
  const Task task = abc_task();
  Dataset dataset;
  dataset.examples = {make_example("e1", "a", "alpha"), make_example("e1", "b", "beta"),
                      make_example("e2", "c", "delta")};
  const auto violations = validate_dataset(dataset, task);
  REQUIRE(violations.size() == 2);
  CHECK(violations[0].example_id == "e1");
  CHECK(violations[0].rule == "duplicate-id");
  CHECK(violations[1].example_id == "e2");
  CHECK(violations[1].rule == "label-out-of-set");
}

TEST_CASE("validate_variant_set enforces placeholder preservation and distinct texts") {
  Prompt base{"p", "Classify {text}.", Provenance::manual()};
  PromptVariantSet set;
  set.base = base;
  set.variants = {Prompt{"p-v1", "Please classify {text}.", Provenance::paraphrase_of("p")}};
  CHECK_NOTHROW(validate_variant_set(set));
  CHECK(set.k() == 1);

  set.variants.push_back(Prompt{"p-v2", "No placeholder.", Provenance::paraphrase_of("p")});
  CHECK_THROWS_AS(validate_variant_set(set), std::invalid_argument);

  set.variants = {Prompt{"p-v1", base.text, Provenance::paraphrase_of("p")}};
  CHECK_THROWS_AS(validate_variant_set(set), std::invalid_argument);

  set.variants.clear();
  CHECK_THROWS_AS(validate_variant_set(set), std::invalid_argument);
}

TEST_CASE("validate_objective rejects negative and all-zero weights") {
  CHECK_NOTHROW(validate_objective(ObjectiveConfig{1.0, 0.0}));
  CHECK_NOTHROW(validate_objective(ObjectiveConfig{0.5, 0.5}));
  CHECK_THROWS_AS(validate_objective(ObjectiveConfig{-0.1, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(validate_objective(ObjectiveConfig{0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("provenance JSON keeps kind-specific fields") {
  const json manual = json(Provenance::manual());
  CHECK(manual.at("kind") == "manual");
  CHECK(manual.get<Provenance>().kind == ProvenanceKind::Manual);

  const json para = json(Provenance::paraphrase_of("base-1"));
  CHECK(para.at("parent") == "base-1");
  const Provenance para_back = para.get<Provenance>();
  CHECK(para_back.kind == ProvenanceKind::ParaphraseOf);
  CHECK(para_back.parent_id == "base-1");

  const json cand = json(Provenance::optimizer_candidate(4, "p-prev"));
  const Provenance cand_back = cand.get<Provenance>();
  CHECK(cand_back.kind == ProvenanceKind::OptimizerCandidate);
  CHECK(cand_back.iteration == 4);
  CHECK(cand_back.parent_id == "p-prev");

  CHECK_THROWS(json{{"kind", "mystery"}}.get<Provenance>());
}

TEST_CASE("prediction JSON round-trips with and without probabilities") {
  const Task task = abc_task();
  const Prediction with = probs_of(task, {0.1, 0.2, 0.7});
  const Prediction with_back = json(with).get<Prediction>();
  CHECK(with_back.label == "gamma");
  REQUIRE(with_back.probs.has_value());
  CHECK(with_back.probs->at("alpha") == doctest::Approx(0.1));

  const Prediction without = Prediction::from_label(task, "alpha", "alpha!");
  const json j = json(without);
  CHECK(j.at("probs").is_null());
  const Prediction without_back = j.get<Prediction>();
  CHECK_FALSE(without_back.probs.has_value());
  CHECK(without_back.raw_output == "alpha!");
}

TEST_CASE("eval record and summary JSON round-trip optionals as null") {
  const Task task = abc_task();
  EvalRecord record;
  record.example_id = "e1";
  record.base_prediction = probs_of(task, {0.6, 0.3, 0.1});
  record.variant_predictions = {Prediction::from_label(task, "beta", "")};
  record.flip = true;
  record.flip_rate = 1.0;
  record.correct = true;
  record.margin = 0.3;

  const json j = json(record);
  CHECK(j.at("conformal_set").is_null());
  CHECK(j.at("covered").is_null());
  const EvalRecord back = j.get<EvalRecord>();
  CHECK(back.margin == doctest::Approx(0.3));
  CHECK_FALSE(back.conformal_set.has_value());
  CHECK(back.variant_predictions.size() == 1);

  EvalSummary summary;
  summary.prompt_id = "p";
  summary.n_examples = 1;
  summary.accuracy = 1.0;
  summary.macro_f1 = 1.0;
  summary.mean_flip_rate = 0.25;
  summary.records = {record};
  const EvalSummary summary_back = json(summary).get<EvalSummary>();
  CHECK(summary_back.mean_flip_rate == doctest::Approx(0.25));
  CHECK_FALSE(summary_back.log_loss.has_value());
  CHECK(summary_back.records.size() == 1);
}

TEST_CASE("dataset JSONL round-trips and reports the failing line") {
  Dataset dataset;
  dataset.examples = {make_example("e1", "first", "alpha"), make_example("e2", "second", "beta")};
  dataset.examples[1].metadata["origin"] = "unit";

  const std::string text = dataset_to_jsonl(dataset);
  const Dataset back = dataset_from_jsonl(text);
  REQUIRE(back.examples.size() == 2);
  CHECK(back.examples[0].inputs.at("text") == "first");
  CHECK(back.examples[1].metadata.at("origin") == "unit");

  try {
    dataset_from_jsonl("{\"id\":\"ok\",\"inputs\":{},\"gold_label\":\"alpha\"}\nnot json\n");
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_prompt_file reads raw text and JSON prompts") {
  TempDir dir;
  {
    std::ofstream out(dir.file("greeting.txt"));
    out << "Say hi to {text}.\n";
  }
  const Prompt raw = load_prompt_file(dir.file("greeting.txt"));
  CHECK(raw.id == "greeting");
  CHECK(raw.text == "Say hi to {text}.");  // trailing newline stripped
  CHECK(raw.provenance.kind == ProvenanceKind::Manual);

  {
    std::ofstream out(dir.file("prompt.json"));
    out << json(Prompt{"custom-id", "Classify {text}.", Provenance::paraphrase_of("root")}).dump();
  }
  const Prompt loaded = load_prompt_file(dir.file("prompt.json"));
  CHECK(loaded.id == "custom-id");
  CHECK(loaded.provenance.kind == ProvenanceKind::ParaphraseOf);
}

TEST_CASE("load_task validates on load") {
  TempDir dir;
  {
    std::ofstream out(dir.file("bad.json"));
    out << R"({"id":"t","label_set":["only"],"input_fields":["text"]})";
  }
  CHECK_THROWS_AS(load_task(dir.file("bad.json")), std::invalid_argument);
}
