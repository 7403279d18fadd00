#ifndef VGPL_PROMPT_HPP
#define VGPL_PROMPT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "vgpl/autodiff.hpp"
#include "vgpl/nets.hpp"
#include "vgpl/params.hpp"

namespace vgpl {

// Learnable prompt context plus a frozen random text-encoder stand-in. A
// class's prompted feature is stub(ctx (+) class_embed); gradients reach only
// the context vectors. Class embeddings are a pure function of the class
// name and the embed seed, so unseen classes can be embedded at evaluation
// time without any stored state.
struct PromptState {
  int context_len = 0;  // number of context vectors
  int embed_dim = 0;    // width of each context vector and class embedding
  int out_dim = 0;      // feature-space width
  int stub_hidden = 0;
  uint64_t embed_seed = 0;
  ParamGroup ctx;               // trainable, context_len * embed_dim
  ParamGroup stub;              // frozen
  std::vector<Vec> class_embeds;  // one per training class

  static PromptState init(int context_len, int embed_dim, int out_dim, int stub_hidden,
                          const std::vector<std::string>& class_names, uint64_t seed);
  int stub_input_width() const { return (context_len + 1) * embed_dim; }
};

Vec class_embedding(uint64_t embed_seed, const std::string& name, int embed_dim);

ag::Var encode_prompted(ag::Tape& tape, ag::Var ctx_leaf, ag::Var stub_leaf, const PromptState& state,
                        const Vec& class_embed);
Vec encode_prompted(const PromptState& state, const Vec& class_embed);
Vec encode_prompted(const PromptState& state, int class_id);

double cosine(const Vec& a, const Vec& b);

// argmax over cos(x, prompted[c]); exact ties resolve to the smallest index.
int classify(const Vec& x, const std::vector<Vec>& prompted);

}  // namespace vgpl

#endif
