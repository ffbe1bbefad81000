#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prodchoice/gateway.hpp"

namespace prodchoice::prompts {

/// Bumped whenever any template text changes.
inline constexpr std::string_view kPromptVersion = "1";

extern const std::string_view kCompletionDeveloper;
extern const std::string_view kCompletionDemoUser;
extern const std::string_view kCompletionDemoAssistant;
extern const std::string_view kNoHistoryUser;
extern const std::string_view kPrevUtteranceUser;
extern const std::string_view kFullHistoryUser;

extern const std::string_view kParaphraseDeveloper;
extern const std::string_view kParaphraseUser;
extern const std::string_view kParaphraseDemoUser;
extern const std::string_view kParaphraseDemoAssistant;

extern const std::string_view kJudgeDeveloper;
extern const std::string_view kJudgeUser;
extern const std::string_view kJudgeDemoUser;
extern const std::string_view kJudgeDemoAssistant;

/// Replaces every `{name}` occurrence with vars[name]; unknown placeholders
/// are left untouched.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

enum class HistoryCondition { no_history, prev_utterance, full_history };

std::vector<gateway::Message> completion_messages(HistoryCondition condition, std::string_view context,
                                                  std::string_view history, std::string_view speaker_id);
std::vector<gateway::Message> paraphrase_messages(std::string_view text, std::string_view context,
                                                  int n);
std::vector<gateway::Message> judge_messages(std::string_view text, std::string_view generation);

}  // namespace prodchoice::prompts
