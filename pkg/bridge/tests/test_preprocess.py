from cemtm_bridge.preprocess import preprocess_text


class TestPreprocessText:
    def test_punctuation_and_casing(self):
        assert preprocess_text("Lava, FLOWS!") == ["lava", "flows"]

    def test_markup_stripped(self):
        assert preprocess_text("<b>ash</b>") == ["ash"]

    def test_empty_string(self):
        assert preprocess_text("") == []

    def test_numbers_kept(self):
        assert preprocess_text("Eruption of 1883") == ["eruption", "of", "1883"]

    def test_apostrophes_survive_inside_words(self):
        assert preprocess_text("Don't panic") == ["don't", "panic"]

    def test_nested_markup_and_attributes(self):
        text = '<div class="x"><p>magma <em>chamber</em></p></div>'
        assert preprocess_text(text) == ["magma", "chamber"]

    def test_whitespace_only(self):
        assert preprocess_text("  \n\t ") == []
