#pragma once

#include "termscope/corpus_store.hpp"
#include "termscope/harvester.hpp"
#include "termscope/html.hpp"
#include "termscope/language.hpp"
#include "termscope/lens_service.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/measure_eval.hpp"
#include "termscope/pipeline.hpp"
#include "termscope/taxonomy.hpp"
#include "termscope/term_classifier.hpp"
#include "termscope/term_extractor.hpp"
#include "termscope/topic_miner.hpp"
#include "termscope/url.hpp"
