#include "mrt/model.hpp"

#include <sstream>

namespace mrt {

std::vector<int> caption_token_ids(const std::string& text, int vocab, int max_tokens) {
    std::vector<int> ids;
    std::istringstream in(text);
    std::string word;
    while (in >> word && int(ids.size()) < max_tokens) {
        ids.push_back(int(fnv1a(word) % uint64_t(vocab)));
    }
    return ids;
}

}  // namespace mrt
