#pragma once

#include "np2mt/numerics/tensor.hpp"
#include "np2mt/numerics/random.hpp"
#include "np2mt/numerics/parameters.hpp"
#include "np2mt/numerics/tape.hpp"
#include "np2mt/numerics/ops.hpp"
#include "np2mt/numerics/gradient_check.hpp"
#include "np2mt/nn/lstm.hpp"
#include "np2mt/nn/attention.hpp"
#include "np2mt/nn/decoder_stack.hpp"
#include "np2mt/data/vocabulary.hpp"
#include "np2mt/data/corpus.hpp"
#include "np2mt/data/dictionary.hpp"
#include "np2mt/model/config.hpp"
#include "np2mt/model/model.hpp"
#include "np2mt/dp/segmental_dp.hpp"
#include "np2mt/decode/trace.hpp"
#include "np2mt/decode/decoding.hpp"
#include "np2mt/decode/translate.hpp"
#include "np2mt/train/schedule.hpp"
#include "np2mt/train/adam.hpp"
#include "np2mt/train/trainer.hpp"
#include "np2mt/train/checkpoint.hpp"
#include "np2mt/eval/bleu.hpp"
#include "np2mt/toy/phrase_task.hpp"
