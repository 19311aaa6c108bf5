#pragma once

// Character-trigram language identification. Each shipped profile is built
// from a short reference text; input text is scored by cosine similarity
// between trigram frequency vectors.

#include "termscope/util/text.hpp"

#include <algorithm>
#include <cmath>
#include <cwctype>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace termscope {

class InsufficientText : public std::runtime_error {
public:
    InsufficientText() : std::runtime_error("insufficient_text") {}
};

struct LanguageGuess {
    std::string code;
    double confidence = 0.0;
};

namespace lang_detail {

inline char32_t fold(char32_t c) {
    if (c < 0x80) return static_cast<char32_t>(std::tolower(static_cast<int>(c)));
    // Latin-1 supplement and Cyrillic capitals
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    if (c >= 0x410 && c <= 0x42F) return c + 0x20;
    if (c >= 0x400 && c <= 0x40F) return c + 0x50;
    return c;
}

inline bool is_letter(char32_t c) {
    if (c < 0x80) return std::isalpha(static_cast<int>(c)) != 0;
    if (c == 0xD7 || c == 0xF7) return false;
    if (c >= 0xC0 && c <= 0x24F) return true;   // Latin extended
    if (c >= 0x400 && c <= 0x4FF) return true;  // Cyrillic
    if (c >= 0x3040 && c <= 0x30FF) return true; // kana
    if (c >= 0x4E00 && c <= 0x9FFF) return true; // CJK unified
    if (c >= 0x3400 && c <= 0x4DBF) return true;
    return false;
}

using Profile = std::unordered_map<std::u32string, double>;

inline Profile trigram_profile(std::string_view utf8) {
    auto cps = text::utf8_decode(utf8);
    std::u32string cleaned = U" ";
    for (char32_t c : cps) {
        if (is_letter(c)) cleaned.push_back(fold(c));
        else if (cleaned.back() != U' ') cleaned.push_back(U' ');
    }
    if (cleaned.back() != U' ') cleaned.push_back(U' ');
    Profile p;
    for (std::size_t i = 0; i + 3 <= cleaned.size(); ++i) {
        auto tri = cleaned.substr(i, 3);
        if (tri[1] == U' ') continue; // skip gaps spanning two words
        p[tri] += 1.0;
    }
    return p;
}

inline double norm(const Profile& p) {
    double s = 0;
    for (const auto& [_, v] : p) s += v * v;
    return std::sqrt(s);
}

inline double cosine(const Profile& a, double norm_a, const Profile& b, double norm_b) {
    if (norm_a == 0 || norm_b == 0) return 0;
    const Profile& small = a.size() <= b.size() ? a : b;
    const Profile& large = a.size() <= b.size() ? b : a;
    double dot = 0;
    for (const auto& [k, v] : small)
        if (auto it = large.find(k); it != large.end()) dot += v * it->second;
    return dot / (norm_a * norm_b);
}

struct ReferenceText {
    const char* code;
    const char* text;
};

// Reference texts: everyday prose plus shop and policy vocabulary.
inline constexpr ReferenceText kReferenceTexts[] = {
    {"en",
     "The weather was warm and the children played in the garden until the evening. She said that they would "
     "come back next week with their friends. We will send your order as soon as possible and you can return any "
     "item within thirty days of delivery. All prices include tax and shipping is free for orders over fifty "
     "dollars. Please read these terms and conditions carefully before using our website. If you have any "
     "questions about your account, contact our customer service team. The company is not responsible for any "
     "delay caused by the carrier. By placing an order you agree to pay the full amount shown at checkout. This "
     "is the house where I have lived with my family for many years, and there is nothing that I would change. "
     "What do you think about the new book that was written by her brother?"},
    {"de",
     "Das Wetter war warm und die Kinder spielten bis zum Abend im Garten. Sie sagte, dass sie nächste Woche mit "
     "ihren Freunden wiederkommen würden. Wir versenden Ihre Bestellung so schnell wie möglich und Sie können jeden "
     "Artikel innerhalb von dreißig Tagen nach der Lieferung zurückgeben. Alle Preise verstehen sich inklusive "
     "Mehrwertsteuer und der Versand ist ab fünfzig Euro kostenlos. Bitte lesen Sie diese Allgemeinen "
     "Geschäftsbedingungen sorgfältig durch, bevor Sie unsere Webseite nutzen. Wenn Sie Fragen zu Ihrem Konto "
     "haben, wenden Sie sich an unseren Kundendienst. Das Unternehmen haftet nicht für Verzögerungen, die durch den "
     "Spediteur verursacht werden. Mit der Bestellung verpflichten Sie sich, den vollen Betrag zu zahlen. Dies ist "
     "das Haus, in dem ich seit vielen Jahren mit meiner Familie lebe, und ich würde nichts ändern. Was hältst du "
     "von dem neuen Buch, das ihr Bruder geschrieben hat? Der Hund schläft unter dem Tisch und die Katze sitzt auf "
     "dem Stuhl."},
    {"fr",
     "Le temps était chaud et les enfants ont joué dans le jardin jusqu'au soir. Elle a dit qu'ils reviendraient la "
     "semaine prochaine avec leurs amis. Nous expédierons votre commande dès que possible et vous pouvez retourner "
     "tout article dans les trente jours suivant la livraison. Tous les prix incluent la taxe et la livraison est "
     "gratuite pour les commandes de plus de cinquante euros. Veuillez lire attentivement ces conditions générales "
     "avant d'utiliser notre site. Si vous avez des questions sur votre compte, contactez notre service client. La "
     "société n'est pas responsable des retards causés par le transporteur. En passant une commande, vous acceptez "
     "de payer le montant total. C'est la maison où j'habite avec ma famille depuis de nombreuses années et je ne "
     "changerais rien. Que penses-tu du nouveau livre écrit par son frère?"},
    {"es",
     "El tiempo era cálido y los niños jugaron en el jardín hasta la noche. Ella dijo que volverían la próxima "
     "semana con sus amigos. Enviaremos su pedido lo antes posible y puede devolver cualquier artículo dentro de los "
     "treinta días posteriores a la entrega. Todos los precios incluyen impuestos y el envío es gratuito para "
     "pedidos de más de cincuenta euros. Por favor, lea atentamente estos términos y condiciones antes de utilizar "
     "nuestro sitio web. Si tiene alguna pregunta sobre su cuenta, póngase en contacto con nuestro servicio de "
     "atención al cliente. La empresa no se hace responsable de los retrasos causados por el transportista. Al "
     "realizar un pedido usted acepta pagar el importe total. Esta es la casa donde he vivido con mi familia "
     "durante muchos años y no cambiaría nada. ¿Qué piensas del nuevo libro que escribió su hermano?"},
    {"it",
     "Il tempo era caldo e i bambini hanno giocato nel giardino fino alla sera. Lei ha detto che sarebbero tornati "
     "la settimana prossima con i loro amici. Spediremo il vostro ordine il prima possibile e potete restituire "
     "qualsiasi articolo entro trenta giorni dalla consegna. Tutti i prezzi sono comprensivi di imposte e la "
     "spedizione è gratuita per ordini superiori a cinquanta euro. Si prega di leggere attentamente questi termini "
     "e condizioni prima di utilizzare il nostro sito. Se avete domande sul vostro account, contattate il nostro "
     "servizio clienti. La società non è responsabile per i ritardi causati dal corriere. Effettuando un ordine "
     "accettate di pagare l'importo totale. Questa è la casa dove ho vissuto con la mia famiglia per molti anni e "
     "non cambierei niente. Che cosa pensi del nuovo libro scritto da suo fratello?"},
    {"nl",
     "Het weer was warm en de kinderen speelden tot de avond in de tuin. Ze zei dat ze volgende week met hun "
     "vrienden terug zouden komen. Wij verzenden uw bestelling zo snel mogelijk en u kunt elk artikel binnen "
     "dertig dagen na levering terugsturen. Alle prijzen zijn inclusief belasting en de verzending is gratis voor "
     "bestellingen boven de vijftig euro. Lees deze algemene voorwaarden zorgvuldig door voordat u onze website "
     "gebruikt. Als u vragen heeft over uw account, neem dan contact op met onze klantenservice. Het bedrijf is "
     "niet verantwoordelijk voor vertragingen die door de vervoerder worden veroorzaakt. Door een bestelling te "
     "plaatsen gaat u akkoord met het betalen van het volledige bedrag. Dit is het huis waar ik al vele jaren met "
     "mijn familie woon en ik zou niets veranderen. Wat vind jij van het nieuwe boek dat haar broer heeft "
     "geschreven?"},
    {"pt",
     "O tempo estava quente e as crianças brincaram no jardim até à noite. Ela disse que voltariam na próxima "
     "semana com os seus amigos. Enviaremos a sua encomenda o mais rapidamente possível e pode devolver qualquer "
     "artigo no prazo de trinta dias após a entrega. Todos os preços incluem impostos e o envio é gratuito para "
     "encomendas acima de cinquenta euros. Por favor, leia atentamente estes termos e condições antes de utilizar "
     "o nosso site. Se tiver alguma dúvida sobre a sua conta, entre em contacto com o nosso serviço de apoio ao "
     "cliente. A empresa não é responsável por atrasos causados pela transportadora. Ao fazer uma encomenda, você "
     "concorda em pagar o valor total. Esta é a casa onde vivi com a minha família durante muitos anos e não "
     "mudaria nada. O que você acha do novo livro escrito pelo irmão dela? Não há nenhuma razão para isso."},
    {"zh",
     "天气很暖和，孩子们在花园里一直玩到晚上。她说他们下个星期会和朋友一起回来。我们会尽快发送您的订单，您可以在收货后三十天内退回任何商品。"
     "所有价格均已含税，订单满五十元免运费。在使用我们的网站之前，请仔细阅读这些条款和条件。如果您对您的账户有任何问题，请联系我们的客户服务团队。"
     "对于承运人造成的任何延误，本公司概不负责。下订单即表示您同意支付结账时显示的全部金额。这是我和家人住了很多年的房子，我什么都不想改变。"
     "你觉得她哥哥写的那本新书怎么样？我们的产品质量很好，价格也很便宜。"},
    {"ja",
     "天気は暖かく、子供たちは夕方まで庭で遊んでいました。彼女は来週友達と一緒に戻ってくると言いました。ご注文はできるだけ早く発送いたします。"
     "商品はお届けから三十日以内であれば返品することができます。すべての価格には税金が含まれており、五千円以上のご注文は送料無料です。"
     "当サイトをご利用になる前に、この利用規約をよくお読みください。アカウントについてご質問がある場合は、カスタマーサービスまでお問い合わせください。"
     "配送業者による遅延について、当社は責任を負いません。ご注文いただくことで、お客様は合計金額を支払うことに同意したものとみなされます。"
     "これは私が家族と何年も住んでいる家で、何も変えたくありません。彼女のお兄さんが書いた新しい本をどう思いますか。"},
    {"ru",
     "Погода была тёплой, и дети играли в саду до самого вечера. Она сказала, что они вернутся на следующей неделе "
     "со своими друзьями. Мы отправим ваш заказ как можно скорее, и вы можете вернуть любой товар в течение "
     "тридцати дней после доставки. Все цены включают налог, а доставка бесплатна для заказов на сумму более "
     "пятидесяти рублей. Пожалуйста, внимательно прочитайте эти условия перед использованием нашего сайта. Если у "
     "вас есть вопросы о вашей учётной записи, свяжитесь с нашей службой поддержки. Компания не несёт "
     "ответственности за задержки, вызванные перевозчиком. Размещая заказ, вы соглашаетесь оплатить полную сумму. "
     "Это дом, где я много лет живу со своей семьёй, и я бы ничего не изменил. Что ты думаешь о новой книге, "
     "которую написал её брат?"},
};

} // namespace lang_detail

class LanguageDetector {
public:
    static constexpr std::size_t kMinChars = 20;

    // Profiles keyed by code; ordering of insertion does not affect results.
    LanguageDetector() {
        for (const auto& ref : lang_detail::kReferenceTexts) add_profile(ref.code, ref.text);
    }

    void add_profile(const std::string& code, std::string_view reference_text) {
        auto p = lang_detail::trigram_profile(reference_text);
        auto n = lang_detail::norm(p);
        profiles_[code] = {std::move(p), n};
    }

    std::vector<std::string> languages() const {
        std::vector<std::string> out;
        for (const auto& [code, _] : profiles_) out.push_back(code);
        return out;
    }

    LanguageGuess detect(std::string_view input) const {
        auto normalized = text::normalize_whitespace(input);
        if (text::utf8_decode(normalized).size() < kMinChars) throw InsufficientText();
        auto profile = lang_detail::trigram_profile(normalized);
        auto n = lang_detail::norm(profile);
        LanguageGuess best{std::string(kUnknown), 0.0};
        double best_score = -1.0, total = 0.0;
        // std::map iteration is ordered by code, so ties resolve to the
        // lexicographically smallest code regardless of insertion order.
        for (const auto& [code, entry] : profiles_) {
            double score = lang_detail::cosine(profile, n, entry.profile, entry.norm);
            total += score;
            if (score > best_score) {
                best_score = score;
                best.code = code;
            }
        }
        if (best_score <= 0.0) return {std::string(kUnknown), 0.0};
        best.confidence = std::clamp(best_score / total, 0.0, 1.0);
        return best;
    }

    static constexpr std::string_view kUnknown = "unknown";

private:
    struct Entry {
        lang_detail::Profile profile;
        double norm = 0;
    };
    std::map<std::string, Entry> profiles_;
};

inline const LanguageDetector& default_language_detector() {
    static const LanguageDetector detector;
    return detector;
}

inline LanguageGuess detect_language(std::string_view text) { return default_language_detector().detect(text); }

} // namespace termscope
