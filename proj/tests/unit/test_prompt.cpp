#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "relcot/prompt.hpp"
#include "relcot/stage_oracle.hpp"

using namespace relcot;
using namespace relcot::prompt;

namespace {

RelevanceExample spanish_example() {
    RelevanceExample ex;
    ex.query = {"q7", "zapatos rojos", {"es", "Spanish"}, "red shoes"};
    ex.category = CategoryPath::parse("Shoes > Women");
    ex.label = Label::Relevant;
    return ex;
}

}  // namespace

TEST_CASE("stage names and headings are stable") {
    CHECK(stage_name(Stage::CategoryMatching) == "CategoryMatching");
    CHECK(stage_from_name("RelevanceJudgment") == Stage::RelevanceJudgment);
    CHECK_THROWS_AS(stage_from_name("Judgement"), std::invalid_argument);
    CHECK(stage_heading(Stage::Translation) == "Step 1: Translation");
    CHECK(stage_heading(Stage::RelevanceJudgment) == "Step 4: Relevance Judgment");
}

TEST_CASE("prompt modes parse from their names") {
    CHECK(to_string(PromptMode::Staged) == "staged");
    CHECK(prompt_mode_from_string("fused") == PromptMode::Fused);
    CHECK_THROWS_AS(prompt_mode_from_string("both"), std::invalid_argument);
}

TEST_CASE("body placeholders come back deduplicated in appearance order") {
    const auto names = body_placeholders("{intent} then {query} then {intent}");
    REQUIRE(names.size() == 2);
    CHECK(names[0] == "intent");
    CHECK(names[1] == "query");
    CHECK(body_placeholders("no markers {notone}").size() == 0);
}

TEST_CASE("template validation enforces stage placeholder scope") {
    PromptTemplate tmpl{"t", Stage::Translation, TaskKind::QC, "Translate {query}.", "1"};
    CHECK_NOTHROW(validate_template(tmpl));

    SUBCASE("later-stage placeholder in an early stage") {
        tmpl.body = "Translate {matching_analysis}.";
        CHECK_THROWS_AS(validate_template(tmpl), std::invalid_argument);
    }
    SUBCASE("empty fields") {
        tmpl.template_id.clear();
        CHECK_THROWS_AS(validate_template(tmpl), std::invalid_argument);
    }
    SUBCASE("judgment stage may reference everything") {
        PromptTemplate j{"j", Stage::RelevanceJudgment, TaskKind::QC,
                         "{query} {translation} {intent} {matching_analysis} {category_path}",
                         "1"};
        CHECK_NOTHROW(validate_template(j));
    }
}

TEST_CASE("render_stage_prompt substitutes from the context") {
    PromptTemplate tmpl{"t", Stage::Translation, TaskKind::QC,
                        "The user query is written in {language}: {query}", "1"};
    const auto ctx = stage_context(spanish_example());
    const auto prompt = render_stage_prompt(tmpl, ctx);
    CHECK(prompt.find("Spanish") != std::string::npos);
    CHECK(prompt.find("zapatos rojos") != std::string::npos);

    SUBCASE("missing placeholder is an error") {
        PromptTemplate needy{"t2", Stage::RelevanceJudgment, TaskKind::QC,
                             "{matching_analysis}", "1"};
        CHECK_THROWS_AS(render_stage_prompt(needy, ctx), std::invalid_argument);
    }
}

TEST_CASE("stage context carries stage outputs only when supplied") {
    const auto ex = spanish_example();
    auto ctx = stage_context(ex);
    CHECK(ctx.at("query") == "zapatos rojos");
    CHECK(ctx.at("language") == "Spanish");
    CHECK(ctx.at("category_path") == "Shoes > Women");
    CHECK(ctx.count("translation") == 0);

    ctx = stage_context(ex, "red shoes", "wants shoes");
    CHECK(ctx.at("translation") == "red shoes");
    CHECK(ctx.at("intent") == "wants shoes");
    CHECK(ctx.count("matching_analysis") == 0);
}

TEST_CASE("shipped template sets validate for both task kinds") {
    for (const TaskKind kind : {TaskKind::QC, TaskKind::QI}) {
        const auto defaults = default_templates(kind);
        REQUIRE(defaults.size() == 4);
        CHECK_NOTHROW(validate_template_set(defaults));
        const auto compact = compact_templates(kind);
        REQUIRE(compact.size() == 4);
        CHECK_NOTHROW(validate_template_set(compact));
        // the two variants must not collide on template ids
        CHECK(defaults[0].template_id != compact[0].template_id);
    }
}

TEST_CASE("template_for_stage rejects duplicates and gaps") {
    auto set = default_templates(TaskKind::QC);
    CHECK(template_for_stage(set, Stage::IntentUnderstanding).stage ==
          Stage::IntentUnderstanding);

    auto dup = set;
    dup.push_back(set[0]);
    CHECK_THROWS_WITH_AS(template_for_stage(dup, Stage::Translation),
                         doctest::Contains("duplicate stage"), std::invalid_argument);

    set.erase(set.begin());
    CHECK_THROWS_WITH_AS(template_for_stage(set, Stage::Translation),
                         doctest::Contains("missing stage"), std::invalid_argument);
}

TEST_CASE("fused prompts include all four step headings in order") {
    const auto prompt = render_fused_prompt(default_templates(TaskKind::QC), spanish_example());
    std::size_t last = 0;
    for (const Stage stage : kStageOrder) {
        const auto pos = prompt.find(stage_heading(stage));
        REQUIRE(pos != std::string::npos);
        CHECK(pos > last);
        last = pos;
    }
    // later-stage placeholders become references to earlier outputs
    CHECK(prompt.find("{translation}") == std::string::npos);
    CHECK(prompt.find("{intent}") == std::string::npos);
    CHECK(prompt.find("{matching_analysis}") == std::string::npos);
    CHECK(prompt.find("zapatos rojos") != std::string::npos);
}

TEST_CASE("fused prompt requires templates matching the task kind") {
    CHECK_THROWS_AS(render_fused_prompt(default_templates(TaskKind::QI), spanish_example()),
                    std::invalid_argument);
}

TEST_CASE("parse_judgment reads the last labeled line") {
    CHECK(parse_judgment("analysis...\nFinal answer: 1") == Label::Relevant);
    CHECK(parse_judgment("Final answer: 0\n\n") == Label::Irrelevant);
    CHECK(parse_judgment("the verdict is \"1\".") == Label::Relevant);
    CHECK_THROWS_WITH_AS(parse_judgment("no digits here"), doctest::Contains("no label"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_judgment("0 or 1"), doctest::Contains("ambiguous"),
                         std::runtime_error);
    // digits embedded in larger tokens do not count
    CHECK_THROWS_AS(parse_judgment("level 10 match"), std::runtime_error);
}

TEST_CASE("fused responses round-trip through parse_trace") {
    const std::array<std::string, 4> stages = {
        "red shoes",
        "The query asks for red shoes.",
        "Type consistency: ...\nOverall match: yes",
        "The analysis found a match.\nFinal answer: 1",
    };
    const auto text = render_fused_response(stages);
    const auto trace = parse_trace(text, PromptMode::Fused);
    CHECK(trace.translation == stages[0]);
    CHECK(trace.intent == stages[1]);
    CHECK(trace.matching_analysis == stages[2]);
    CHECK(trace.judgment == Label::Relevant);
    CHECK(trace.stage_responses[3] == stages[3]);

    SUBCASE("a missing heading names its stage") {
        const auto broken = text.substr(text.find("Step 2"));
        CHECK_THROWS_WITH_AS(parse_trace(broken, PromptMode::Fused),
                             doctest::Contains("Translation"), std::runtime_error);
    }
}

TEST_CASE("array parse_trace fills the same fields") {
    const std::array<std::string, 4> stages = {
        "red shoes", "intent text", "analysis\nOverall match: no", "nope\nFinal answer: 0"};
    const auto trace = parse_trace(stages);
    CHECK(trace.translation == "red shoes");
    CHECK(trace.judgment == Label::Irrelevant);
    CHECK(trace.stage_responses == stages);
}

TEST_CASE("staged dataset emits four rows per example, fused one") {
    const std::vector<RelevanceExample> examples = {spanish_example()};
    const RuleStageOracle oracle;
    const auto templates = default_templates(TaskKind::QC);

    const auto staged = build_instruction_dataset(examples, templates, PromptMode::Staged, oracle);
    REQUIRE(staged.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(staged[i].stage == kStageOrder[i]);
        CHECK(staged[i].source_example_id == "q7");
        CHECK(staged[i].input.empty());
        CHECK(!staged[i].instruction.empty());
        CHECK(!staged[i].response.empty());
    }
    CHECK(staged[3].response.find("Final answer: 1") != std::string::npos);

    const auto fused = build_instruction_dataset(examples, templates, PromptMode::Fused, oracle);
    REQUIRE(fused.size() == 1);
    CHECK(fused[0].stage == Stage::RelevanceJudgment);
    const auto trace = parse_trace(fused[0].response, PromptMode::Fused);
    CHECK(trace.judgment == Label::Relevant);
}

TEST_CASE("dataset building rejects unlabeled examples") {
    auto ex = spanish_example();
    ex.label.reset();
    CHECK_THROWS_AS(build_instruction_dataset({ex}, default_templates(TaskKind::QC),
                                              PromptMode::Staged, RuleStageOracle{}),
                    std::invalid_argument);
}

TEST_CASE("instruction records round-trip through jsonl") {
    std::vector<InstructionRecord> records;
    records.push_back({"do the thing", "", "done", Stage::CategoryMatching, "e1"});
    records.push_back({"judge \"it\"\nnow", "", "Final answer: 0", Stage::RelevanceJudgment, "e2"});
    const auto text = write_instruction_records(records);
    std::istringstream in(text);
    CHECK(parse_instruction_records(in) == records);
}

TEST_CASE("template files round-trip and load from a directory") {
    const auto tmpl = default_templates(TaskKind::QC)[2];
    CHECK(parse_template_file(write_template_file(tmpl)) == tmpl);

    const auto dir = std::filesystem::path(RELCOT_SOURCE_DIR) / "templates" / "default";
    for (const TaskKind kind : {TaskKind::QC, TaskKind::QI}) {
        auto from_disk = load_template_dir(dir.string(), kind);
        auto compiled = default_templates(kind);
        const auto by_id = [](const PromptTemplate& a, const PromptTemplate& b) {
            return a.template_id < b.template_id;
        };
        std::sort(from_disk.begin(), from_disk.end(), by_id);
        std::sort(compiled.begin(), compiled.end(), by_id);
        CHECK(from_disk == compiled);
    }

    const auto compact_dir = std::filesystem::path(RELCOT_SOURCE_DIR) / "templates" / "compact";
    auto from_disk = load_template_dir(compact_dir.string(), TaskKind::QC);
    auto compiled = compact_templates(TaskKind::QC);
    CHECK(from_disk.size() == compiled.size());
}

TEST_CASE("malformed template files are rejected") {
    CHECK_THROWS_AS(parse_template_file("no front matter separator"), relcot::ParseError);
    CHECK_THROWS_AS(parse_template_file("stage: Translation\n---\nbody"), std::invalid_argument);
    CHECK_THROWS_AS(
        parse_template_file("template_id: t\nstage: Nope\ntask_kind: QC\nversion: 1\n---\nbody"),
        std::invalid_argument);
}
