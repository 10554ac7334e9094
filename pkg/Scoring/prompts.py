"""Prompt templates for classification, QA augmentation and innovation scoring.

Section text, questions and answers are wrapped in tags so a provider (and the
mock) can recover each part of the prompt unambiguously.
"""

SECTION_LABELS = (
    'Abstract', 'Introduction', 'RelatedWork', 'Approach', 'AnalysisTheory',
    'Experiments', 'ExperimentAnalysis', 'Discussion', 'Conclusion',
)
UNMATCHED_LABEL = 'Unmatched'

TRUNCATION_MARKER = ' [...]'

CLASSIFY_SYSTEM = (
    'You are a classifier for sections of scientific papers. '
    'Given a section heading and the beginning of its text, answer with exactly one label from: {labels}. '
    'Methodology, Model and Method sections are labeled Approach; Limitations sections are labeled Discussion. '
    '{fallback} Reply with the label only.'
)
CLASSIFY_STRICT_FALLBACK = 'Always choose the closest label, even when the fit is loose.'
CLASSIFY_LENIENT_FALLBACK = 'If no label fits with confidence, answer {unmatched}.'.format(unmatched=UNMATCHED_LABEL)

CLASSIFY_USER = 'Section heading: {heading}\n<section>\n{body}\n</section>'

CLASSIFY_REPROMPT = (
    'Your previous answer "{answer}" is not a valid label. '
    'Answer with exactly one of: {labels}.'
)

QA_SYSTEM = (
    'You read one section of a scientific paper and answer a question about its innovation. '
    'Ground the answer in the section text and keep it to one paragraph.'
)

QA_USER = (
    'Section type: {section_type}\n'
    '<section>\n{body}\n</section>\n'
    '<question>{question}</question>'
)

SCORE_SYSTEM = (
    'You are an expert reviewer following the ACL-2018 review form. '
    'Judge the novelty of the given section of a scientific paper on a 1-5 scale: '
    '5 = transformative, 4 = creative, 3 = respectable, 2 = pedestrian, 1 = significant portions have been done before. '
    'Also rate your confidence on a 1-5 scale: 5 = positive that the assessment is correct, '
    '3 = pretty sure but could have missed something, 1 = not my area. '
    'Return a JSON object with the keys "novelty_score", "reason" and "confidence_score".'
)

SCORE_PLUS_SYSTEM = (
    'You are an expert reviewer following the ACL-2018 review form. '
    'Judge the given section of a scientific paper on three attributes, each on a 1-5 scale: '
    'novelty (newness of ideas), contribution (theoretical, methodological or applied value) '
    'and feasibility (potential for real-world implementation). '
    'For each attribute also rate your confidence on a 1-5 scale. '
    'Return a JSON object with the keys "novelty_score", "contribution_score", "feasibility_score", '
    '"novelty_confidence", "contribution_confidence", "feasibility_confidence" and "reason".'
)

CRITICAL_SCORING = (
    'Be decisive in your scoring and give higher or lower scores when there is clear evidence, '
    'rather than always choosing the middle range.'
)

SCORE_USER = 'Section type: {section_type}\n<section>\n{body}\n</section>'
SCORE_QA = '\n<question>{question}</question>\n<answer>{answer}</answer>'

JSON_REPROMPT = (
    'Your previous reply could not be used: {problem}. '
    'Reply again with a single JSON object containing the keys {keys}, '
    'where every score is a number.'
)


def classify_system(lenient):
    labels = list(SECTION_LABELS)
    if lenient:
        labels.append(UNMATCHED_LABEL)
        fallback = CLASSIFY_LENIENT_FALLBACK
    else:
        fallback = CLASSIFY_STRICT_FALLBACK
    return CLASSIFY_SYSTEM.format(labels=', '.join(labels), fallback=fallback)


def classify_reprompt(answer, lenient):
    labels = list(SECTION_LABELS) + ([UNMATCHED_LABEL] if lenient else [])
    return CLASSIFY_REPROMPT.format(answer=answer.strip()[:80], labels=', '.join(labels))


def score_system(plus=False, critical=False):
    system = SCORE_PLUS_SYSTEM if plus else SCORE_SYSTEM
    if critical:
        system = f'{system} {CRITICAL_SCORING}'
    return system


def score_user(section_type, body, qa=None):
    user = SCORE_USER.format(section_type=section_type, body=body)
    if qa is not None:
        user += SCORE_QA.format(question=qa.question, answer=qa.answer)
    return user


def json_reprompt(problem, keys):
    return JSON_REPROMPT.format(problem=problem, keys=', '.join(f'"{k}"' for k in keys))


def truncate(text, budget):
    """Cut ``text`` to ``budget`` characters, keeping the head."""
    if budget is None or len(text) <= budget:
        return text
    return text[:budget].rstrip() + TRUNCATION_MARKER
