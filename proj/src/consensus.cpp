#include "pullsync/consensus.hpp"

#include <array>

namespace pullsync {

ProtocolSpec maj_consensus_protocol() {
  ProtocolSpec spec;
  spec.name = "maj-consensus";
  spec.eta = 2;
  spec.ell = 1;
  spec.bitwise_independent = true;
  spec.init_space.visible_is_state = true;
  spec.init_space.principal_bound = 2;
  spec.init_space.canonicalize = [](AgentView& self) { self.output_bit = self.visible.bit(0); };
  spec.update = [](AgentView& self, std::span<const BitString> observed, SplitMix64&) {
    const std::array<Opinion, 2> pulled{Opinion{(observed[0].value() & 1U) != 0},
                                        Opinion{(observed[1].value() & 1U) != 0}};
    const Opinion next = maj_consensus_update(Opinion{(self.visible.value() & 1U) != 0}, pulled);
    self.visible = BitString(1, next.bit ? 1 : 0);
    self.output_bit = next.bit;
  };
  return spec;
}

}  // namespace pullsync
