#include "support/corpus.hpp"

#include <array>
#include <string>

#include "relcot/stage_oracle.hpp"
#include "relcot/tensor.hpp"

namespace testsupport {

namespace {

struct TypeEntry {
    const char* type;
    const char* path;
};

// Paths end in a plural (or exact) form of the type so the type token hits
// the deepest level. Attribute words never occur in any path, which keeps
// the mismatch branch genuinely irrelevant.
constexpr std::array<TypeEntry, 8> kTypes = {{
    {"shoes", "Shoes > Women"},
    {"wallet", "Clothing > Accessories > Wallets"},
    {"headphones", "Electronics > Audio > Headphones"},
    {"mug", "Home > Kitchen > Mugs"},
    {"laptop", "Electronics > Computers > Laptops"},
    {"chair", "Furniture > Chairs"},
    {"lamp", "Home > Lighting > Lamps"},
    {"dress", "Clothing > Women > Dresses"},
}};

constexpr std::array<const char*, 8> kAttributes = {
    "red", "blue", "leather", "wireless", "ceramic", "wooden", "vintage", "foldable",
};

}  // namespace

std::vector<relcot::RelevanceExample> make_rule_corpus(std::size_t n, std::uint64_t seed) {
    relcot::nn::Rng rng(seed);
    std::vector<relcot::RelevanceExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& type = kTypes[rng.bounded(kTypes.size())];
        std::string query = kAttributes[rng.bounded(kAttributes.size())];
        if (rng.bounded(3) == 0) {
            query += ' ';
            query += kAttributes[rng.bounded(kAttributes.size())];
        }
        query += ' ';
        query += type.type;

        const TypeEntry& target =
            rng.bounded(2) == 0 ? type : kTypes[rng.bounded(kTypes.size())];

        relcot::RelevanceExample example;
        example.query.id = "rc-" + std::to_string(i);
        example.query.raw_text = query;
        example.query.language = {"en", "English"};
        example.category = relcot::CategoryPath::parse(target.path);
        const auto facts = relcot::rules::analyze(query, example.category);
        example.label = facts.relevant ? relcot::Label::Relevant : relcot::Label::Irrelevant;
        out.push_back(std::move(example));
    }
    return out;
}

}  // namespace testsupport
