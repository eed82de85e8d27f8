#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "noteqa.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace noteqa;

namespace {

std::string words_line(size_t n, const std::string& citations) {
    std::string s;
    for (size_t i = 0; i < n; ++i) {
        if (i) s.push_back(' ');
        s += "w" + std::to_string(i);
    }
    return s + " |" + citations + "|";
}

evaluation::CaseAnswer make_answer(const std::string& case_id, const std::string& text) {
    return {case_id, evaluation::validate_and_truncate(text)};
}

corpus::CaseKey make_key(const std::string& case_id,
                         std::map<int, corpus::RelevanceLabel> labels) {
    corpus::CaseKey k;
    k.case_id = case_id;
    k.labels = std::move(labels);
    return k;
}

}  // namespace

TEST(Evaluation, LineGrammar) {
    auto accepts = [](const std::string& line) {
        evaluation::ParsedAnswer p = evaluation::validate_and_truncate(line);
        return p.violations == 0 && p.lines.size() == 1;
    };
    EXPECT_TRUE(accepts("He improved. |1|"));
    EXPECT_TRUE(accepts("He improved. |1,2,10|"));
    EXPECT_TRUE(accepts("  padded   |3|  "));

    evaluation::ParsedAnswer p = evaluation::validate_and_truncate("He improved. |1,2|");
    ASSERT_EQ(p.lines.size(), 1u);
    EXPECT_EQ(p.lines[0].text, "He improved.");
    EXPECT_EQ(p.lines[0].citations, (std::vector<int>{1, 2}));

    for (const char* bad :
         {"No citation group at all", "Trailing text |1| extra", "Empty group ||",
          "Letters |1a|", "Zero |0|", "Too long |1234567890|", "Double comma |1,,2|",
          "Trailing comma |1,|", "Only comma |,|"}) {
        evaluation::ParsedAnswer r = evaluation::validate_and_truncate(bad);
        EXPECT_EQ(r.violations, 1u) << bad;
        EXPECT_TRUE(r.lines.empty()) << bad;
    }

    // Zero ids vanish but the rest of the group still counts.
    evaluation::ParsedAnswer mixed = evaluation::validate_and_truncate("Mixed |0,2|");
    ASSERT_EQ(mixed.lines.size(), 1u);
    EXPECT_EQ(mixed.lines[0].citations, (std::vector<int>{2}));

    // Blank lines are ignored entirely.
    EXPECT_EQ(evaluation::validate_and_truncate("\n\n  \n").violations, 0u);
}

TEST(Evaluation, TruncationCutsTheCrossingLine) {
    std::string answer =
        words_line(40, "1") + "\n" + words_line(40, "2,3") + "\n" + words_line(40, "4") + "\n";
    evaluation::ParsedAnswer p = evaluation::validate_and_truncate(answer);
    EXPECT_TRUE(p.truncated);
    ASSERT_EQ(p.lines.size(), 2u);
    EXPECT_EQ(text::whitespace_tokens(p.lines[0].text).size(), 40u);
    EXPECT_EQ(text::whitespace_tokens(p.lines[1].text).size(), 35u);
    EXPECT_EQ(p.lines[1].text.substr(0, 5), "w0 w1");
    EXPECT_EQ(p.lines[1].citations, (std::vector<int>{2, 3}));  // citations survive the cut
    EXPECT_EQ(p.violations, 0u);
}

TEST(Evaluation, TruncationDropsLineWhenNothingRemains) {
    std::string answer = words_line(75, "1") + "\n" + words_line(5, "2") + "\n";
    evaluation::ParsedAnswer p = evaluation::validate_and_truncate(answer);
    EXPECT_TRUE(p.truncated);
    ASSERT_EQ(p.lines.size(), 1u);
    EXPECT_EQ(p.lines[0].citations, (std::vector<int>{1}));
}

TEST(Evaluation, ViolationsAreCountedPastTruncation) {
    std::string answer = words_line(80, "1") + "\nnot a valid line\nanother bad one\n";
    evaluation::ParsedAnswer p = evaluation::validate_and_truncate(answer);
    EXPECT_TRUE(p.truncated);
    EXPECT_EQ(p.violations, 2u);
}

TEST(Evaluation, TruncationIsIdempotent) {
    std::string answer =
        words_line(40, "1") + "\n" + words_line(40, "2") + "\n" + words_line(40, "3") + "\n";
    evaluation::ParsedAnswer first = evaluation::validate_and_truncate(answer);
    std::string rebuilt;
    for (const evaluation::ParsedSubmissionLine& line : first.lines) {
        rebuilt += line.text + " |";
        for (size_t i = 0; i < line.citations.size(); ++i)
            rebuilt += (i ? "," : "") + std::to_string(line.citations[i]);
        rebuilt += "|\n";
    }
    evaluation::ParsedAnswer second = evaluation::validate_and_truncate(rebuilt);
    EXPECT_FALSE(second.truncated);
    EXPECT_EQ(second.violations, 0u);
    ASSERT_EQ(second.lines.size(), first.lines.size());
    for (size_t i = 0; i < first.lines.size(); ++i) {
        EXPECT_EQ(second.lines[i].text, first.lines[i].text);
        EXPECT_EQ(second.lines[i].citations, first.lines[i].citations);
    }
}

TEST(Evaluation, FactualityHandCounts) {
    std::vector<corpus::CaseKey> keys = {
        make_key("1", {{2, corpus::RelevanceLabel::essential},
                       {3, corpus::RelevanceLabel::essential},
                       {4, corpus::RelevanceLabel::supplementary}}),
        make_key("2", {{5, corpus::RelevanceLabel::essential}})};
    std::vector<evaluation::CaseAnswer> answers = {
        make_answer("1", "Cited. |2,4,9|")};  // case 2 unanswered

    evaluation::FactualityReport r = evaluation::factuality(answers, keys);
    EXPECT_DOUBLE_EQ(r.strict.micro.precision, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.strict.micro.recall, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.strict.micro.f1, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.strict.macro.precision, (1.0 / 3.0 + 0.0) / 2.0);
    EXPECT_DOUBLE_EQ(r.strict.macro.recall, (0.5 + 0.0) / 2.0);
    EXPECT_DOUBLE_EQ(r.strict.macro.f1, 0.2);

    EXPECT_DOUBLE_EQ(r.lenient.micro.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.lenient.micro.recall, 0.5);
    EXPECT_DOUBLE_EQ(r.lenient.micro.f1, 4.0 / 7.0);
    EXPECT_DOUBLE_EQ(r.lenient.macro.f1, (2.0 / 3.0) / 2.0);

    EXPECT_THROW(
        evaluation::factuality({make_answer("ghost", "Cited. |1|")}, keys),
        ValidationError);
}

TEST(Evaluation, FactualityEmptySetConventions) {
    // Empty gold vs empty prediction scores 1.0; vs any prediction, 0.0.
    std::vector<corpus::CaseKey> keys = {
        make_key("e", {{1, corpus::RelevanceLabel::not_relevant}})};
    evaluation::FactualityReport agree = evaluation::factuality({}, keys);
    EXPECT_DOUBLE_EQ(agree.strict.micro.f1, 1.0);
    EXPECT_DOUBLE_EQ(agree.strict.macro.f1, 1.0);

    evaluation::FactualityReport disagree =
        evaluation::factuality({make_answer("e", "Cited. |1|")}, keys);
    EXPECT_DOUBLE_EQ(disagree.strict.micro.f1, 0.0);
    EXPECT_DOUBLE_EQ(disagree.strict.micro.recall, 0.0);
}

TEST(Evaluation, FactualityOrderInvariance) {
    std::vector<corpus::CaseKey> keys = {
        make_key("1", {{1, corpus::RelevanceLabel::essential}}),
        make_key("2", {{2, corpus::RelevanceLabel::essential},
                       {3, corpus::RelevanceLabel::not_relevant}})};
    std::vector<evaluation::CaseAnswer> answers = {make_answer("1", "A. |1|"),
                                                   make_answer("2", "B. |3|")};
    evaluation::FactualityReport forward = evaluation::factuality(answers, keys);
    std::reverse(answers.begin(), answers.end());
    evaluation::FactualityReport backward = evaluation::factuality(answers, keys);
    EXPECT_EQ(forward.strict.micro.f1, backward.strict.micro.f1);
    EXPECT_EQ(forward.strict.macro.f1, backward.strict.macro.f1);
    EXPECT_EQ(forward.lenient.micro.precision, backward.lenient.micro.precision);
}

TEST(Evaluation, MetricTokensNormalize) {
    EXPECT_EQ(evaluation::metric_tokens("He improved |1,2| fast."),
              (std::vector<std::string>{"he", "improved", "fast"}));
    EXPECT_TRUE(evaluation::metric_tokens("|1| |2,3|").empty());
}

TEST(Evaluation, BleuHandExamples) {
    EXPECT_DOUBLE_EQ(evaluation::bleu("the cat sat", {"the cat sat"}), 1.0);
    EXPECT_DOUBLE_EQ(evaluation::bleu("dog", {"cat"}), 0.0);
    EXPECT_DOUBLE_EQ(evaluation::bleu("", {"cat"}), 0.0);
    EXPECT_DOUBLE_EQ(evaluation::bleu("cat", {}), 0.0);
    // Perfect prefix: every precision is 1 (smoothed above unigram), so only
    // the brevity penalty for c=2 vs r=3 remains.
    EXPECT_NEAR(evaluation::bleu("the cat", {"the cat sat"}), std::exp(-0.5), 1e-12);
    // The closest reference length sets the penalty; a tie prefers the shorter
    // reference, and reference order never matters.
    double both = evaluation::bleu("a b c", {"a b", "a b c d"});
    double swapped = evaluation::bleu("a b c", {"a b c d", "a b"});
    double longer_only = evaluation::bleu("a b c", {"a b c d"});
    EXPECT_EQ(both, swapped);
    EXPECT_NEAR(both, longer_only * std::exp(1.0 / 3.0), 1e-12);
}

TEST(Evaluation, RougeHandExamples) {
    EXPECT_NEAR(evaluation::rouge_l("the cat sat on the mat", "the cat lay on the mat"),
                5.0 / 6.0, 1e-12);
    EXPECT_DOUBLE_EQ(evaluation::rouge_l("same text", "same text"), 1.0);
    EXPECT_DOUBLE_EQ(evaluation::rouge_l("alpha", "beta"), 0.0);
    EXPECT_DOUBLE_EQ(evaluation::rouge_l("", "beta"), 0.0);
}

TEST(Evaluation, SariHandExamples) {
    EXPECT_DOUBLE_EQ(evaluation::sari("a b", "a b", {"a b"}), 1.0);
    // Full rewrite matching the reference: keeps are vacuous, deletions and
    // additions both exactly right.
    EXPECT_DOUBLE_EQ(evaluation::sari("a b", "c d", {"c d"}), 1.0);
    EXPECT_DOUBLE_EQ(evaluation::sari("a b", "a b", {}), 0.0);
}

TEST(Evaluation, BleuMatchesIndependentOracle) {
    std::mt19937 rng(31);
    std::uniform_int_distribution<int> nrefs(1, 3);
    for (int round = 0; round < 25; ++round) {
        std::string hyp = oracle::random_text(rng, 1, 30);
        std::vector<std::string> refs;
        int n = nrefs(rng);
        for (int i = 0; i < n; ++i) refs.push_back(oracle::random_text(rng, 1, 30));
        EXPECT_NEAR(evaluation::bleu(hyp, refs), oracle::bleu(hyp, refs), 1e-9)
            << "hyp: " << hyp;
    }
}

TEST(Evaluation, RougeMatchesIndependentOracle) {
    std::mt19937 rng(37);
    for (int round = 0; round < 25; ++round) {
        std::string hyp = oracle::random_text(rng, 1, 40);
        std::string ref = oracle::random_text(rng, 1, 40);
        EXPECT_NEAR(evaluation::rouge_l(hyp, ref), oracle::rouge_l(hyp, ref), 1e-9);
    }
}

TEST(Evaluation, SariMatchesIndependentOracle) {
    std::mt19937 rng(41);
    std::uniform_int_distribution<int> nrefs(1, 2);
    for (int round = 0; round < 25; ++round) {
        std::string src = oracle::random_text(rng, 2, 30);
        std::string hyp = oracle::random_text(rng, 1, 30);
        std::vector<std::string> refs;
        int n = nrefs(rng);
        for (int i = 0; i < n; ++i) refs.push_back(oracle::random_text(rng, 1, 30));
        EXPECT_NEAR(evaluation::sari(src, hyp, refs), oracle::sari(src, hyp, refs), 1e-6)
            << "src: " << src << " hyp: " << hyp;
    }
}

TEST(Evaluation, RelevanceAveragesOverAllKeyedCases) {
    corpus::Dataset data = corpus::load_dataset(support::fixture("mini.xml"),
                                                support::fixture("mini.key.json"));
    // A perfect-looking answer for case 1 only; the other three cases still
    // sit in the denominator as zeros.
    const corpus::Case* c1 = data.find_case("1");
    ASSERT_NE(c1, nullptr);
    std::string reference;
    for (int id : data.keys->at(0).ids_with(corpus::RelevanceLabel::essential))
        reference += c1->sentence(id)->text + " ";
    reference += c1->clinician_question;

    std::vector<evaluation::CaseAnswer> answers = {
        make_answer("1", reference + " |2|")};
    evaluation::RelevanceReport rel = evaluation::relevance(answers, data);
    double solo_bleu = evaluation::bleu(reference, {reference});
    EXPECT_NEAR(rel.bleu, solo_bleu / 4.0, 1e-12);
    EXPECT_NEAR(rel.rouge_l_f, 1.0 / 4.0, 1e-12);
    EXPECT_GT(rel.sari, 0.0);
    EXPECT_NEAR(rel.aggregate, (rel.bleu + rel.rouge_l_f + rel.sari) / 3.0, 1e-12);

    // No answers at all: every component zero, aggregate zero.
    evaluation::RelevanceReport empty = evaluation::relevance({}, data);
    EXPECT_EQ(empty.bleu, 0.0);
    EXPECT_EQ(empty.rouge_l_f, 0.0);
    EXPECT_EQ(empty.sari, 0.0);
    EXPECT_EQ(empty.aggregate, 0.0);

    corpus::Dataset keyless = data;
    keyless.keys.reset();
    EXPECT_THROW(evaluation::relevance(answers, keyless), ValidationError);
}

TEST(Evaluation, PluggedMetricsExtendTheAggregate) {
    corpus::Dataset data = corpus::load_dataset(support::fixture("mini.xml"),
                                                support::fixture("mini.key.json"));
    evaluation::RelevanceReport base = evaluation::relevance({}, data);
    evaluation::RelevanceReport plugged =
        evaluation::relevance({}, data, {{"medcon", 0.8}});
    EXPECT_NEAR(plugged.aggregate, 0.8 / 4.0, 1e-12);
    EXPECT_EQ(plugged.plugged.at("medcon"), 0.8);
    EXPECT_NEAR(base.aggregate, 0.0, 1e-12);
}

TEST(Evaluation, OverallIsTheMeanOfTheTwoAxes) {
    evaluation::OverallReport o = evaluation::overall(0.4, 0.6);
    EXPECT_DOUBLE_EQ(o.overall, 0.5);
    EXPECT_DOUBLE_EQ(o.relevance, 0.4);
    EXPECT_DOUBLE_EQ(o.factuality, 0.6);
}

TEST(Evaluation, MergeReportAcceptsBothShapes) {
    evaluation::OverallReport flat = evaluation::merge_report(
        corpus::json{{"relevance", 0.312}, {"factuality", 0.464}});
    EXPECT_NEAR(flat.overall, 0.388, 1e-9);

    corpus::json nested = {
        {"relevance", {{"aggregate", 0.312}, {"bleu", 0.1}}},
        {"factuality", {{"strict", {{"micro", {{"f1", 0.464}}}}}}}};
    evaluation::OverallReport deep = evaluation::merge_report(nested);
    EXPECT_NEAR(deep.overall, 0.388, 1e-9);
    EXPECT_EQ(flat.overall, deep.overall);

    EXPECT_THROW(evaluation::merge_report(corpus::json{{"relevance", 0.1}}), ValidationError);
    EXPECT_THROW(evaluation::merge_report(corpus::json::array()), ValidationError);
}

TEST(Evaluation, ReportJsonSchemaAndTable) {
    evaluation::RelevanceReport rel;
    rel.bleu = 0.1;
    rel.rouge_l_f = 0.2;
    rel.sari = 0.3;
    rel.plugged = {{"medcon", 0.4}};
    rel.aggregate = 0.25;
    evaluation::FactualityReport fact;
    fact.strict.micro = {0.5, 0.5, 0.5};
    fact.strict.macro = {0.6, 0.6, 0.6};
    fact.lenient.micro = {0.7, 0.7, 0.7};
    fact.lenient.macro = {0.8, 0.8, 0.8};

    corpus::json report = evaluation::report_to_json(rel, fact, 2);
    EXPECT_DOUBLE_EQ(report.at("overall").get<double>(), (0.25 + 0.5) / 2.0);
    EXPECT_DOUBLE_EQ(report.at("relevance").at("aggregate").get<double>(), 0.25);
    EXPECT_DOUBLE_EQ(report.at("relevance").at("medcon").get<double>(), 0.4);
    EXPECT_DOUBLE_EQ(
        report.at("factuality").at("lenient").at("macro").at("f1").get<double>(), 0.8);
    EXPECT_EQ(report.at("violations").get<size_t>(), 2u);

    // merge_report round-trips the file it produces.
    EXPECT_DOUBLE_EQ(evaluation::merge_report(report).overall, 0.375);

    std::string table = evaluation::human_table(report);
    EXPECT_NE(table.find("overall                  0.375\n"), std::string::npos) << table;
    EXPECT_NE(table.find("strict micro-F1          0.500\n"), std::string::npos);
    EXPECT_NE(table.find("  medcon                 0.400\n"), std::string::npos);
    EXPECT_NE(table.find("violations                   2\n"), std::string::npos);
}
