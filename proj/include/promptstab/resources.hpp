#pragma once
// Versioned meta-prompt strings. These are part of the observable behavior of
// LLM-backed generation, so they are named resources: any wording change gets
// a new constant and call sites opt in explicitly.

#include <string_view>

namespace promptstab::resources {

inline constexpr std::string_view kParaphraseMetaPromptV1 =
    "You rewrite task instructions. Produce paraphrases that preserve the meaning, the level of "
    "detail, and every placeholder of the original instruction. Placeholders look like "
    "{field_name} and must be copied verbatim, unchanged and uncounted. Do not add or remove "
    "requirements. Reply with one paraphrase per line, numbered like '1. ...', and nothing else.";

inline constexpr std::string_view kCandidateMetaPromptV1 =
    "You revise task instructions to fix observed failures. You will see the current instruction, "
    "its measured accuracy and paraphrase flip rate, and a few failing examples. Propose revised "
    "instructions that keep every {field_name} placeholder verbatim, stay faithful to the task, "
    "and plausibly fix the failures: clarify the decision rule, constrain the output format, or "
    "make the wording more robust to rephrasing. Reply with one complete revised instruction per "
    "line, numbered like '1. ...', and nothing else.";

}  // namespace promptstab::resources
