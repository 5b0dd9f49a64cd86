from .encoder import (EncoderConfig, EncoderParams, ParamGrads, backward,
                      encode, grad_check, init_params, sgd_step)
from .prototypes import (EpisodeResult, Prototypes, class_scores,
                         compute_prototypes, episode_loss)
from .quantization import (ElementType, FixedSpec, PayloadKind,
                           QuantizedEncoder, payload_bytes, quantize_encoder,
                           quantize_value, quantized_encode)
