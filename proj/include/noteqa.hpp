#pragma once

#include "noteqa/answer.hpp"
#include "noteqa/corpus.hpp"
#include "noteqa/errors.hpp"
#include "noteqa/evaluation.hpp"
#include "noteqa/genclient.hpp"
#include "noteqa/http.hpp"
#include "noteqa/logging.hpp"
#include "noteqa/pipeline.hpp"
#include "noteqa/prf.hpp"
#include "noteqa/selection.hpp"
#include "noteqa/text.hpp"
#include "noteqa/tfidf.hpp"
#include "noteqa/xml.hpp"
