#include "vgpl/prompt.hpp"

#include <cmath>

#include "vgpl/errors.hpp"
#include "vgpl/rng.hpp"

namespace vgpl {

PromptState PromptState::init(int context_len, int embed_dim, int out_dim, int stub_hidden,
                              const std::vector<std::string>& class_names, uint64_t seed) {
  if (context_len <= 0) throw validation_error("prompt: context_len must be positive");
  if (embed_dim <= 0 || out_dim <= 0 || stub_hidden <= 0)
    throw validation_error("prompt: dims must be positive");
  PromptState st;
  st.context_len = context_len;
  st.embed_dim = embed_dim;
  st.out_dim = out_dim;
  st.stub_hidden = stub_hidden;
  st.embed_seed = derive_seed(seed, "prompt.embed");
  st.ctx = ParamGroup("prompt_ctx", static_cast<std::size_t>(context_len) * embed_dim);
  // contexts start near zero so initial prompts are dominated by the class
  Rng ctx_rng(derive_seed(seed, "prompt.ctx"));
  for (auto& v : st.ctx.values) v = 0.02 * ctx_rng.normal();
  st.stub = ParamGroup("text_stub", mlp2_param_count(st.stub_input_width(), stub_hidden, out_dim),
                       /*train=*/false);
  Rng stub_rng(derive_seed(seed, "prompt.stub"));
  mlp2_init(st.stub.values, st.stub_input_width(), stub_hidden, out_dim, stub_rng);
  st.class_embeds.reserve(class_names.size());
  for (const auto& name : class_names) st.class_embeds.push_back(class_embedding(st.embed_seed, name, embed_dim));
  return st;
}

Vec class_embedding(uint64_t embed_seed, const std::string& name, int embed_dim) {
  if (embed_dim <= 0) throw validation_error("class_embedding: embed_dim must be positive");
  Rng rng(mix64(embed_seed ^ fnv1a64(name)));
  return rng.normals(static_cast<std::size_t>(embed_dim));
}

ag::Var encode_prompted(ag::Tape& tape, ag::Var ctx_leaf, ag::Var stub_leaf, const PromptState& state,
                        const Vec& class_embed) {
  if (class_embed.size() != static_cast<std::size_t>(state.embed_dim))
    throw validation_error("encode_prompted: class embedding length mismatch");
  ag::Var input = tape.concat(ctx_leaf, tape.constant(class_embed));
  return mlp2_apply(tape, stub_leaf, 0, state.stub_input_width(), state.stub_hidden, state.out_dim, input);
}

Vec encode_prompted(const PromptState& state, const Vec& class_embed) {
  if (class_embed.size() != static_cast<std::size_t>(state.embed_dim))
    throw validation_error("encode_prompted: class embedding length mismatch");
  Vec input;
  input.reserve(static_cast<std::size_t>(state.stub_input_width()));
  input.insert(input.end(), state.ctx.values.begin(), state.ctx.values.end());
  input.insert(input.end(), class_embed.begin(), class_embed.end());
  return mlp2_forward(state.stub.values, state.stub_input_width(), state.stub_hidden, state.out_dim, input);
}

Vec encode_prompted(const PromptState& state, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= state.class_embeds.size())
    throw validation_error("encode_prompted: class id out of range");
  return encode_prompted(state, state.class_embeds[static_cast<std::size_t>(class_id)]);
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw validation_error("cosine: length mismatch");
  double na = 0.0, nb = 0.0, d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    d += a[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw validation_error("cosine: zero-norm input");
  return d / (std::sqrt(na) * std::sqrt(nb));
}

int classify(const Vec& x, const std::vector<Vec>& prompted) {
  if (prompted.empty()) throw validation_error("classify: empty candidate set");
  int best = 0;
  double best_cos = cosine(x, prompted[0]);
  for (std::size_t c = 1; c < prompted.size(); ++c) {
    double cc = cosine(x, prompted[c]);
    if (cc > best_cos) {
      best_cos = cc;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace vgpl
