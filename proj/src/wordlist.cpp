#include "genfacet/catalog.hpp"

namespace genfacet::words {

const std::vector<std::string>& categories() {
    static const std::vector<std::string> list = {
        "dress",  "shoes",   "jacket", "shirt",   "handbag", "watch",  "sofa",    "lamp",
        "backpack", "sweater", "jeans", "skirt",  "coat",    "boots",  "sneakers", "hat",
        "scarf",  "blanket", "pillow", "curtain", "rug",     "mug",    "kettle",  "headphones",
    };
    return list;
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& attributes() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> list = {
        {"color", {"red", "blue", "green", "black", "white", "pink", "yellow", "purple"}},
        {"material", {"cotton", "linen", "silk", "wool", "leather", "denim", "polyester", "cashmere"}},
        {"pattern", {"striped", "floral", "plaid", "checked", "dotted", "solid", "paisley", "camouflage"}},
        {"style", {"casual", "formal", "vintage", "boho", "sporty", "minimalist", "preppy", "streetwear"}},
        {"fit", {"slim", "regular", "loose", "oversized", "tailored", "relaxed", "skinny", "straight"}},
        {"season", {"spring", "summer", "autumn", "winter", "allseason", "monsoon", "holiday", "resort"}},
        {"brand", {"acme", "zenith", "nova", "orion", "lumen", "vertex", "aurora", "titan"}},
        {"size", {"xs", "small", "medium", "large", "xl", "xxl", "petite", "plus"}},
        {"occasion", {"wedding", "office", "party", "beach", "travel", "gym", "date", "festival"}},
        {"neckline", {"vneck", "crewneck", "halter", "strapless", "boatneck", "turtleneck", "scoop", "cowl"}},
        {"sleeve", {"sleeveless", "shortsleeve", "longsleeve", "capsleeve", "puffsleeve", "bellsleeve",
                    "raglan", "threequarter"}},
        {"length", {"mini", "midi", "maxi", "cropped", "ankle", "kneelength", "fulllength", "hiplength"}},
        {"closure", {"zipper", "buttons", "velcro", "laces", "buckle", "snap", "drawstring", "magnetic"}},
        {"texture", {"smooth", "ribbed", "quilted", "fuzzy", "glossy", "matte", "knitted", "woven"}},
        {"finish", {"polished", "brushed", "distressed", "washed", "coated", "lacquered", "raw", "waxed"}},
        {"origin", {"italian", "japanese", "korean", "french", "danish", "nordic", "moroccan", "peruvian"}},
        {"care", {"machinewash", "handwash", "dryclean", "wipeclean", "tumbledry", "coldwash", "airdry",
                  "nowash"}},
        {"theme", {"dopamine", "cottagecore", "y2k", "gorpcore", "balletcore", "coastal", "grunge", "retro"}},
        {"audience", {"women", "men", "kids", "unisex", "teens", "toddlers", "seniors", "maternity"}},
        {"feature", {"waterproof", "breathable", "stretchy", "wrinklefree", "reversible", "insulated",
                     "lightweight", "packable"}},
        {"shape", {"round", "square", "oval", "rectangular", "hexagon", "teardrop", "heart", "triangle"}},
        {"capacity", {"compact", "standard", "family", "jumbo", "travelsize", "pocket", "double", "triple"}},
        {"power", {"corded", "cordless", "battery", "solar", "usb", "rechargeable", "manual", "plugin"}},
        {"warranty", {"noguarantee", "oneyear", "twoyear", "threeyear", "fiveyear", "lifetime", "extended",
                      "limited"}},
        {"certification", {"organic", "recycled", "fairtrade", "vegan", "sustainable", "hypoallergenic",
                           "biodegradable", "certified"}},
        {"weight", {"featherweight", "light", "midweight", "heavy", "heavyweight", "ultralight", "sturdy",
                    "bulky"}},
        {"heel", {"flat", "kitten", "block", "stiletto", "wedge", "platform", "chunky", "cuban"}},
        {"strap", {"adjustable", "detachable", "chain", "crossbody", "shoulder", "wrist", "padded", "braided"}},
        {"lining", {"unlined", "fleecelined", "satinlined", "meshlined", "furlined", "silklined", "halflined",
                    "fulllined"}},
        {"print", {"graphic", "logo", "animal", "abstract", "tropical", "geometric", "tiedye", "ombre"}},
        {"embellishment", {"sequins", "beads", "embroidery", "ruffles", "lace", "studs", "fringe", "pearls"}},
        {"hardware", {"gold", "silver", "bronze", "copper", "gunmetal", "chrome", "brass", "rosegold"}},
        {"fill", {"down", "feather", "foam", "memoryfoam", "gel", "latex", "fiber", "buckwheat"}},
        {"weave", {"twill", "satin", "jersey", "chiffon", "velvet", "tweed", "corduroy", "canvas"}},
        {"sole", {"rubber", "eva", "cork", "crepe", "vibram", "gum", "tpu", "lugged"}},
        {"display", {"analog", "digital", "hybrid", "chronograph", "skeleton", "smart", "touchscreen",
                     "luminous"}},
        {"connectivity", {"bluetooth", "wired", "wireless", "nfc", "wifi", "aux", "lightning", "usbc"}},
        {"noise", {"anc", "passive", "transparency", "open", "closed", "semiopen", "isolating", "ambient"}},
        {"mood", {"cheerful", "calm", "bold", "playful", "elegant", "edgy", "romantic", "serene"}},
        {"surface", {"marbled", "speckled", "gradient", "metallic", "pearlescent", "iridescent", "frosted",
                     "neon"}},
    };
    return list;
}

}  // namespace genfacet::words
