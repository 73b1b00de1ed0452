/** Minimal HTML helpers: views render to strings, main.ts mounts them. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderList(items: string[], cssClass: string): string {
  if (items.length === 0) return "";
  const rows = items.map((item) => `<li>${escapeHtml(item)}</li>`).join("");
  return `<ul class="${cssClass}">${rows}</ul>`;
}
