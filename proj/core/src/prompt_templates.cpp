#include "deleaker/evalkit.hpp"

#include <stdexcept>

namespace deleaker {

// Evaluation prompt set, stored as data with {slot} placeholders. The rank
// template carries {first_image}/{second_image} markers that the request
// assembler replaces with image parts.
namespace {

const std::string kSystem =
    "As an experienced visual inspector, you will analyze images of entities and provide detailed insights on "
    "their visual differences and typicality. You are sensitive to fine small details and differences.";

const std::string kDiffKnowledge =
    "What are the visual appearance differences between {entity1} and {entity2}? answer in a concise "
    "comma-separated list. For example neck length, head color, eyes shape, etc.";

const std::string kDiffImage =
    "Based on these images, what are the visual appearance differences between {entity1} and {entity2}?";

const std::string kDiffMerge =
    "List the key visual differences between {entity1} and {entity2} in a bulleted list. Base your answer on a "
    "synthesis of the 'Source 1' and 'Source 2' descriptions provided below. Each bullet point should concisely "
    "compare a single visual feature. INSTRUCTIONS: 1.  Synthesize Sources:Integrate the key points from BOTH "
    "the 'Source 1' and 'Source 2' descriptions. Do not list the same feature twice or create redundant points. "
    "2.  Highlight Obvious Differences: If either the 'Source 1' or 'Source 2' descriptions explicitly highlight "
    "certain features as particularly noticeable or obvious, ensure these differences are prominently featured "
    "in your list. 3.  Format: Start each bullet point with a bolded feature name followed by a colon (e.g., "
    "Coat:). 4.  Content Structure:After the feature name, first write {entity1}:followed by its description. "
    "Then, on the same line, write {entity2}:followed by its description. Keep descriptions brief. 5.  Focus: "
    "The list must only contain observable, visual differences.EXAMPLES: Tail Feathers: Peacock: Long and "
    "iridescent. Peahen: Short and brown. Coat: Zebra: Black and white stripes. Horse: Solid or patched color. "
    "Facial Markings: Red Panda: White patches on muzzle and eyes. Raccoon: Black mask across eyes. Leg Color: "
    "Flamingo: Pink. American Coot: Grey or black. Covering: Chicken: Feathers. Cat: Fur. Tail: Red Squirrel: "
    "Long and bushy. Pig: Short and hairless. DESCRIPTIONS FOR {entity1} AND {entity2}: Source 1: {source1}. "
    "Source 2: {source2}";

const std::string kTypicalityFirst =
    "Given the differences between {text_entities}, How visually typical {entity} in this image? (Ignore "
    "out-of-frame features.)";

const std::string kTypicalitySecond =
    "Given the differences between {text_entities}, How visually typical {entity} in this image? Ignore "
    "out-of-frame features.)";

const std::string kRank =
    "Given the independent textual typicality inspection of each animal in each image and the images, overall, "
    "how visually typical the {text_entities} in the second image rather in the first image? (Ignore "
    "out-of-frame features.) Notice that both of the animals should appear in each image. If one image shows "
    "both animals, even if one looks unusual, it will be preferred over an image where one of the animals is "
    "missing. First explain, think step by step.\n"
    "Finally, rank the overall relative typicality: Rank: 1min (first image with minor prefrence), 1maj (first "
    "image with major prefrence), 2min (second image with minor prefrence), 2maj (second image with major "
    "prefrence), or 3 (equally typical in both).\n"
    "First Image Inspection: {first_inspection}\n"
    "Second Image Inspection: {second_inspection}\n"
    "First Image: {first_image}, Second Image: {second_image}\n";

} // namespace

const std::string& prompt_template(PromptStage stage) {
    switch (stage) {
    case PromptStage::System: return kSystem;
    case PromptStage::DiffKnowledge: return kDiffKnowledge;
    case PromptStage::DiffImage: return kDiffImage;
    case PromptStage::DiffMerge: return kDiffMerge;
    case PromptStage::TypicalityFirst: return kTypicalityFirst;
    case PromptStage::TypicalitySecond: return kTypicalitySecond;
    case PromptStage::Rank: return kRank;
    }
    throw std::logic_error("unknown prompt stage");
}

} // namespace deleaker
