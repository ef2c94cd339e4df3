#include <cctype>

#include "cgsam/backbone.hpp"

namespace cgsam {

std::vector<std::string> split_words(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string render_prompt(std::string_view prompt_template, std::string_view class_name)
{
    std::string out(prompt_template);
    const auto pos = out.find("{}");
    if (pos == std::string::npos) return out + " " + std::string(class_name);
    out.replace(pos, 2, class_name);
    return out;
}

Tokenizer::Tokenizer(const std::vector<std::string>& words)
{
    for (const char* special : {"<pad>", "<sot>", "<eot>", "<unk>"}) {
        ids_.emplace(special, size());
        words_.emplace_back(special);
    }
    for (const auto& w : words)
        for (auto& part : split_words(w))
            if (ids_.emplace(part, size()).second) words_.push_back(std::move(part));
}

Tokenizer Tokenizer::for_config(const ModelConfig& config)
{
    std::vector<std::string> words = split_words(render_prompt(config.prompt_template, ""));
    words.insert(words.end(), config.classes.begin(), config.classes.end());
    return Tokenizer(words);
}

std::vector<int> Tokenizer::encode(std::string_view text, int context_length) const
{
    const auto words = split_words(text);
    if (words.empty()) throw InputError("empty prompt");
    std::vector<int> ids{sot};
    for (const auto& w : words) {
        if (static_cast<int>(ids.size()) == context_length - 1) break;
        auto it = ids_.find(w);
        ids.push_back(it == ids_.end() ? unk : it->second);
    }
    ids.push_back(eot);
    return ids;
}

}  // namespace cgsam
