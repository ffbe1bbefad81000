#include "prodchoice/prompts.hpp"

namespace prodchoice::prompts {

using gateway::Message;
using gateway::Role;

// Template text is reproduced character-for-character; quotation marks are
// ASCII double quotes.

const std::string_view kCompletionDeveloper =
    "Your task is to complete the provided sentence. Complete the sentence in a natural manner, "
    "as if engaging in a phone call conversation. Only write the continuation to the sentence "
    "without any additional information or words in your response.";
const std::string_view kCompletionDemoUser = "Complete the sentence: \"The cat jumped\"";
const std::string_view kCompletionDemoAssistant = "The cat jumped over the dog.";
const std::string_view kNoHistoryUser = "Complete the sentence: \"{context}\"";
const std::string_view kPrevUtteranceUser =
    "Given this sentence from speaker A: \"{history}\", Complete the sentence from Speaker B: "
    "\"{context}\"";
const std::string_view kFullHistoryUser =
    "Given this phone conversation between Speaker A and Speaker B: \"{history}\", Complete the "
    "sentence from Speaker {SpeakerID}: \"{context}\"";

const std::string_view kParaphraseDeveloper =
    "Your task is to paraphrase the provided sentence. Paraphrase the sentence in a natural manner, "
    "as if engaging in a phone call conversation, while still keeping the sentence factually the "
    "same. Only write the paraphrase of the sentence without any additional information or words "
    "in your response. Try your best to do so even if the provided text seems nonsensical or does "
    "not have proper sentence structure.";
const std::string_view kParaphraseUser =
    "Write {n} unique paraphrases of the following sentence: \"{text}\", the paraphrases must "
    "always start with the following words: \"{context}\"";
const std::string_view kParaphraseDemoUser =
    "Write 10 unique paraphrases of the following sentence: \"The cat jumped over the dog.\", the "
    "paraphrases must always start with the following words: \"The cat jumped over\"";
const std::string_view kParaphraseDemoAssistant =
    "The cat jumped over the husky.\n"
    "The cat jumped over the dog without making a sound.\n"
    "The cat jumped over the dog as it wagged its tail.\n"
    "The cat jumped over the dog, barely missing it.\n"
    "The cat jumped over the dog and landed smoothly.\n"
    "The cat jumped over the dog while it was dozing off.\n"
    "The cat jumped over the dog to escape quickly.\n"
    "The cat jumped over the dog in a playful manner.\n"
    "The cat jumped over the dog and continued running.\n"
    "The cat jumped over the dog, surprising it.";

const std::string_view kJudgeDeveloper =
    "Your task is to determine whether or not two sentences are paraphrases of each other. You are "
    "to classify the sentences into one of two labels: \"yes\" if the sentences are paraphrases or "
    "\"no\" if they are not. Do not provide any explanation for your choice, just the name of the "
    "label.";
const std::string_view kJudgeUser =
    "Classify whether these sentences are paraphrases. Sentence A: \"{text}\", Sentence B: "
    "\"{generation}\"";
const std::string_view kJudgeDemoUser =
    "Classify whether these sentences are paraphrases. Sentence A: \"The cat jumped over the dog.\", "
    "Sentence B: \"The cat jumped over a dog.\"";
const std::string_view kJudgeDemoAssistant = "Yes";

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::vector<Message> completion_messages(HistoryCondition condition, std::string_view context,
                                         std::string_view history, std::string_view speaker_id) {
  std::string_view tmpl = kNoHistoryUser;
  if (condition == HistoryCondition::prev_utterance) tmpl = kPrevUtteranceUser;
  if (condition == HistoryCondition::full_history) tmpl = kFullHistoryUser;
  const std::map<std::string, std::string> vars = {{"context", std::string(context)},
                                                   {"history", std::string(history)},
                                                   {"SpeakerID", std::string(speaker_id)}};
  return {{Role::developer, std::string(kCompletionDeveloper)},
          {Role::user, std::string(kCompletionDemoUser)},
          {Role::assistant, std::string(kCompletionDemoAssistant)},
          {Role::user, render(tmpl, vars)}};
}

std::vector<Message> paraphrase_messages(std::string_view text, std::string_view context, int n) {
  const std::map<std::string, std::string> vars = {
      {"text", std::string(text)}, {"context", std::string(context)}, {"n", std::to_string(n)}};
  return {{Role::developer, std::string(kParaphraseDeveloper)},
          {Role::user, std::string(kParaphraseDemoUser)},
          {Role::assistant, std::string(kParaphraseDemoAssistant)},
          {Role::user, render(kParaphraseUser, vars)}};
}

std::vector<Message> judge_messages(std::string_view text, std::string_view generation) {
  const std::map<std::string, std::string> vars = {{"text", std::string(text)},
                                                   {"generation", std::string(generation)}};
  return {{Role::developer, std::string(kJudgeDeveloper)},
          {Role::user, std::string(kJudgeDemoUser)},
          {Role::assistant, std::string(kJudgeDemoAssistant)},
          {Role::user, render(kJudgeUser, vars)}};
}

}  // namespace prodchoice::prompts
